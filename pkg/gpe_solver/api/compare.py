# ===================================
# api/compare.py
# ===================================
import logging
from concurrent.futures import ThreadPoolExecutor

from gpe_solver.api.common import build_problem, load_reference, run_metadata
from gpe_solver.api.solve import error_series, trace_summary
from gpe_solver.models.run_config import RunConfig
from gpe_solver.services.solver_service import solver_service
from gpe_solver.utils.csv_io import write_csv, write_json, write_trace
from gpe_solver.utils.svg_plot import plot_series_svg
from gpe_solver.utils.validators import longest_plateau

logger = logging.getLogger(__name__)

METRICS = ("adaptive", "h1")


def cmd_compare(config: RunConfig) -> dict:
    """Adaptive-metric vs H^1-metric runs from the same u0, against a reference energy."""
    problem = build_problem(config)
    reference = load_reference(problem, required=True)
    forms = problem.forms
    # factorizations are cached lazily on the FormSet; build them before sharing it
    forms.mass_solve(forms.M @ problem.u0.coeffs)
    forms.h1_solve(forms.M @ problem.u0.coeffs)

    def run(metric):
        return solver_service.run(
            forms, problem.u0, config.step_policy, config.stop, reference=reference, metric=metric
        )

    workers = 2 if config.run.threads > 1 else 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        traces = dict(zip(METRICS, pool.map(run, METRICS)))

    out = problem.out_dir
    summary = {"metadata": run_metadata(problem), "reference_energy": reference.energy}
    for metric, trace in traces.items():
        write_trace(out / f"trace_{metric}.csv", trace)
        energies = trace.energies()
        plateau = longest_plateau(energies)
        summary[metric] = trace_summary(trace)
        summary[metric]["plateau"] = None if plateau is None else {"start": plateau[0], "end": plateau[1]}

    length = max(t.iterations for t in traces.values())
    series = {m: error_series(t) for m, t in traces.items()}
    rows = []
    for n in range(length):
        rows.append([n + 1] + [series[m][n] if n < len(series[m]) else None for m in METRICS])
    write_csv(out / "comparison.csv", ["n"] + [f"energy_error_{m}" for m in METRICS], rows)
    if config.outputs.svg:
        plot_series_svg(out / "comparison.svg", series)

    write_json(out / "comparison_summary.json", summary)
    logger.info(
        "compare: "
        + ", ".join(f"{m} {traces[m].iterations} iterations ({traces[m].stop_reason})" for m in METRICS)
    )
    return summary
