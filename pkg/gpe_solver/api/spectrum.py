# ===================================
# api/spectrum.py
# ===================================
import logging
from pathlib import Path
from typing import Optional

from gpe_solver.api.common import build_problem, run_metadata
from gpe_solver.core.exceptions import ConfigError
from gpe_solver.models.run_config import RunConfig
from gpe_solver.models.spectral import SpectralReport
from gpe_solver.services.spectral_service import spectral_service
from gpe_solver.utils.csv_io import write_csv, write_json
from gpe_solver.utils.state_file import read_state

logger = logging.getLogger(__name__)


def format_report(report: SpectralReport) -> str:
    lines = [
        f"lambda                 {report.lam:.12g}",
        f"GP residual            {report.residual:.3e}",
        f"lambda index in A_u    {report.lambda_index_in_a_u}",
        f"lambda_1, lambda_2     {report.lambda1:.12g}, {report.lambda2:.12g}",
        f"lambda_1 / lambda_2    {report.lambda1 / report.lambda2:.12g}",
        f"iu alignment           {report.iu_alignment:.12f}",
        f"delta_1                {report.delta1:.12g}",
        "mu (by |mu|)           " + ", ".join(f"{m:.10g}" for m in report.mu_list),
        f"rho*(1)                {report.rho_star_at_1:.10g}",
        f"tau limits (+, -)      {report.tau_limits[0]:.10g}, {report.tau_limits[1]:.10g} "
        f"(active: {report.active_tau_limit})",
        f"|mu_1 - l1/l2|         {report.mu_gap:.3e}",
        f"coercivity min defect  {report.coercivity_min_defect:.3e}",
        f"max eigen residual     {report.max_eigen_residual:.3e}",
        "",
        "bound checks:",
    ]
    lines += [f"  {name:<26} {'ok' if ok else 'FAILED'}" for name, ok in report.bound_checks.items()]
    return "\n".join(lines) + "\n"


def spectral_rows(report: SpectralReport):
    rows = []
    for i, v in enumerate(report.a_u_eigs):
        rows.append(["a_u", i + 1, v])
    for i, v in enumerate(report.hess_eigs):
        rows.append(["hessian", i + 1, v])
    for i, v in enumerate(report.mu_list):
        rows.append(["mu", i + 1, v])
    for tau, rho in report.rho_star_samples:
        rows.append(["rho_star", tau, rho])
    return rows


def write_spectral_report(out: Path, report: SpectralReport) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "spectral_report.txt").write_text(format_report(report))
    write_csv(out / "spectral_report.csv", ["quantity", "index", "value"], spectral_rows(report))
    return write_json(out / "spectral_report.json", report.model_dump())


def cmd_spectrum(config: RunConfig, state_path: Optional[str] = None) -> SpectralReport:
    """Diagnostics at a converged state; refuses states above the residual gate."""
    state_path = state_path or config.initial.state_path
    if not state_path:
        raise ConfigError("spectrum needs a converged state file (--state)")
    problem = build_problem(config)
    _, state = read_state(state_path, problem.mesh)
    u, _ = problem.forms.normalize(state)
    spec = config.spectral
    report = spectral_service.spectral_report(problem.forms, u, spec.k_a, spec.k_h, spec.k_mu, seed=config.run.seed)
    write_spectral_report(problem.out_dir, report)
    write_json(problem.out_dir / "spectral_metadata.json", run_metadata(problem))
    logger.info(
        f"spectrum: lambda={report.lam:.10g} rho*(1)={report.rho_star_at_1:.6f} "
        f"bounds {'ok' if report.all_bounds_pass else 'FAILED'}"
    )
    return report
