# ===================================
# api/solve.py
# ===================================
import logging

import numpy as np

from gpe_solver.api.common import Problem, build_problem, load_reference, run_metadata
from gpe_solver.models.run_config import RunConfig
from gpe_solver.models.solver import Trace
from gpe_solver.services.mesh_service import nodal_grid
from gpe_solver.services.solver_service import solver_service
from gpe_solver.utils.csv_io import write_csv, write_json, write_rates, write_trace
from gpe_solver.utils.state_file import write_state
from gpe_solver.utils.svg_plot import plot_series_svg

logger = logging.getLogger(__name__)


def write_density(path, state):
    mesh = state.mesh
    grid = nodal_grid(mesh, np.abs(state.values) ** 2)
    xs = mesh.node_coords[:, 0].reshape(grid.shape)
    ys = mesh.node_coords[:, 1].reshape(grid.shape)
    rows = zip(xs.ravel(), ys.ravel(), grid.ravel())
    return write_csv(path, ["x", "y", "density"], rows)


def trace_summary(trace: Trace) -> dict:
    last = trace.records[-1]
    return {
        "energy": last.energy,
        "lambda": trace.final_lambda,
        "iterations": trace.iterations,
        "stop_reason": trace.stop_reason,
        "residual": last.residual,
        "residual_max": last.residual_max,
        "energy_error": last.energy_error,
        "metric": trace.metric,
        "policy": trace.policy.model_dump(),
    }


def error_series(trace: Trace):
    if trace.records and trace.records[0].energy_error is not None:
        return [r.energy_error for r in trace.records]
    final = trace.records[-1].energy
    return [r.energy - final for r in trace.records]


def cmd_solve(config: RunConfig) -> dict:
    """Run one solve; writes trace.csv, final_state.gpst, density.csv and summary.json."""
    problem: Problem = build_problem(config)
    reference = load_reference(problem)
    retain = config.outputs.retain_states or config.outputs.emit_rates
    trace = solver_service.run(
        problem.forms,
        problem.u0,
        config.step_policy,
        config.stop,
        reference=reference,
        metric=config.policy.metric,
        retain_states=retain,
    )

    out = problem.out_dir
    write_trace(out / "trace.csv", trace)
    write_state(out / "final_state.gpst", trace.final_state)
    write_density(out / "density.csv", trace.final_state)
    summary = trace_summary(trace)
    summary["metadata"] = run_metadata(problem)

    if config.outputs.emit_rates and reference is not None and reference.state is not None:
        samples = solver_service.contraction_rates(problem.forms, trace, reference.state)
        write_rates(out / "rates.csv", samples)
        summary["rate_tail_mean"] = _tail_mean([s.rate for s in samples])

    if config.outputs.emit_spectral:
        from gpe_solver.api.spectrum import write_spectral_report
        from gpe_solver.services.spectral_service import spectral_service

        report = spectral_service.spectral_report(
            problem.forms, trace.final_state, config.spectral.k_a, config.spectral.k_h, config.spectral.k_mu,
            seed=config.run.seed,
        )
        write_spectral_report(out, report)

    if config.outputs.svg:
        plot_series_svg(out / "energy_error.svg", {"energy error": error_series(trace)})

    write_json(out / "summary.json", summary)
    logger.info(
        f"solve: E={summary['energy']:.12g} lambda={summary['lambda']:.10g} "
        f"after {summary['iterations']} iterations ({summary['stop_reason']})"
    )
    return summary


def _tail_mean(values, fraction: float = 0.2):
    if not values:
        return None
    k = max(1, int(len(values) * fraction))
    return float(np.mean(values[-k:]))
