# ===================================
# core/exceptions.py
# ===================================
from typing import Any, List, Optional, Tuple


class GPESolverError(Exception):
    """Base error; `exit_code` is what the CLI returns."""

    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


# ---- configuration errors (exit 2) ----

class ConfigError(GPESolverError):
    exit_code = 2


class InvalidMeshError(ConfigError):
    pass


class PolicyError(ConfigError):
    pass


class AdmissibilityError(ConfigError):
    def __init__(self, message: str, margin: float):
        super().__init__(message)
        self.margin = margin


class InterpolationError(GPESolverError):
    exit_code = 2


class DimensionError(GPESolverError):
    exit_code = 2


class StateFileError(GPESolverError):
    exit_code = 2


# ---- numerical failures (exit 3) ----

class ConvergenceError(GPESolverError):
    exit_code = 3

    def __init__(self, message: str, best: Any = None, residual: Optional[float] = None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class EigenSolverError(ConvergenceError):
    def __init__(self, message: str, partial: Optional[List[Tuple[float, Any]]] = None):
        super().__init__(message)
        self.partial = partial or []


class ConstraintError(GPESolverError):
    exit_code = 3


class DegenerateIterateError(GPESolverError):
    exit_code = 3


class PhaseDegenerateError(GPESolverError):
    exit_code = 3

    def __init__(self, message: str, theta: complex):
        super().__init__(message)
        self.theta = theta


# ---- invariant failures (exit 4) ----

class DissipationViolationError(GPESolverError):
    exit_code = 4

    def __init__(self, message: str, increase: float):
        super().__init__(message)
        self.increase = increase


class InvariantViolationError(GPESolverError):
    exit_code = 4

    def __init__(self, message: str, failures: Optional[list] = None):
        super().__init__(message)
        self.failures = failures or []
