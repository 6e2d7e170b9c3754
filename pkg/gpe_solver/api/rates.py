# ===================================
# api/rates.py
# ===================================
import logging
from typing import Optional

from gpe_solver.api.common import build_problem, run_metadata
from gpe_solver.core.exceptions import ConfigError
from gpe_solver.models.run_config import RunConfig
from gpe_solver.services.solver_service import solver_service
from gpe_solver.services.spectral_service import spectral_service
from gpe_solver.utils.csv_io import write_json, write_rates
from gpe_solver.utils.svg_plot import plot_series_svg
from gpe_solver.utils.state_file import read_state

logger = logging.getLogger(__name__)


def cmd_rates(config: RunConfig, state_path: Optional[str] = None) -> dict:
    """
    Empirical contraction rates of a run towards the converged state, next to
    the predicted constants |mu_1| and lambda_1/lambda_2 at that state.
    """
    state_path = state_path or config.reference.state_path
    if not state_path:
        raise ConfigError("rates needs the converged state to measure against (--state or --reference)")
    problem = build_problem(config)
    forms = problem.forms
    _, ref = read_state(state_path, problem.mesh)
    u_ref, _ = forms.normalize(ref)

    lam = spectral_service.require_converged(forms, u_ref).lam
    weighted = spectral_service.weighted_evp(forms, u_ref, lam, k=1)
    hess = spectral_service.hessian_spectrum(forms, u_ref, k=2)
    mu1 = abs(weighted.mu[0])
    ratio = hess.pairs[0].value / hess.pairs[1].value

    trace = solver_service.run(
        forms, problem.u0, config.step_policy, config.stop, metric=config.policy.metric, retain_states=True
    )
    samples = solver_service.contraction_rates(forms, trace, u_ref)

    out = problem.out_dir
    write_rates(out / "rates.csv", samples)
    meta = {
        "abs_mu1": mu1,
        "lambda1_over_lambda2": ratio,
        "lambda": lam,
        "iterations": trace.iterations,
        "samples": len(samples),
        "metadata": run_metadata(problem),
    }
    write_json(out / "rates_meta.json", meta)
    if config.outputs.svg and samples:
        plot_series_svg(
            out / "rates.svg",
            {
                "r(n)": [s.rate for s in samples],
                "|mu_1|": [mu1] * len(samples),
                "lambda_1/lambda_2": [ratio] * len(samples),
            },
            ylabel="contraction rate",
            logy=False,
        )
    logger.info(f"rates: {len(samples)} samples, |mu_1|={mu1:.6f}, lambda_1/lambda_2={ratio:.6f}")
    return meta
