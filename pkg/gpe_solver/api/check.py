# ===================================
# api/check.py
# ===================================
import logging

from gpe_solver.api.common import build_problem, run_metadata
from gpe_solver.core.exceptions import InvariantViolationError
from gpe_solver.models.common import CheckReport
from gpe_solver.models.run_config import RunConfig
from gpe_solver.services.check_service import check_service
from gpe_solver.utils.csv_io import write_json

logger = logging.getLogger(__name__)


def cmd_check(config: RunConfig) -> CheckReport:
    problem = build_problem(config)
    policy = config.step_policy
    report = check_service.run_battery(
        problem.forms,
        problem.u0,
        policy,
        steps=config.check.steps,
        aux_steps=config.check.aux_steps,
        seed=config.run.seed,
    )
    payload = report.model_dump()
    payload["metadata"] = run_metadata(problem)
    write_json(problem.out_dir / "check_report.json", payload)
    if not report.success:
        raise InvariantViolationError(
            f"{len(report.failures)} invariant check(s) failed: " + ", ".join(r.name for r in report.failures),
            failures=report.failures,
        )
    logger.info(f"check: {len(report.data)} invariants hold")
    return report
