# ===================================
# models/__init__.py
# ===================================
from gpe_solver.models.common import CheckResult, CheckReport
from gpe_solver.models.model_params import ModelParams, PotentialSpec
from gpe_solver.models.solver import StepPolicy, StopCriteria, IterationRecord, Trace
from gpe_solver.models.spectral import SpectralReport, RateSample
from gpe_solver.models.run_config import RunConfig

__all__ = [
    "CheckResult",
    "CheckReport",
    "ModelParams",
    "PotentialSpec",
    "StepPolicy",
    "StopCriteria",
    "IterationRecord",
    "Trace",
    "SpectralReport",
    "RateSample",
    "RunConfig",
]
