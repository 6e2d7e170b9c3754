# ===================================
# models/solver.py
# ===================================
from typing import Any, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from gpe_solver.core.config import settings
from gpe_solver.core.exceptions import PolicyError


class StepPolicy(BaseModel):
    mode: Literal["fixed", "adaptive"] = "adaptive"
    tau: Optional[float] = None
    bracket: Tuple[float, float] = settings.LINE_SEARCH_BRACKET
    scalar_min_tol: float = Field(settings.LINE_SEARCH_TOL, gt=0)

    @model_validator(mode="after")
    def check_ranges(self):
        # tau >= 2 diverges, tau <= 0 makes no progress
        if self.mode == "fixed":
            if self.tau is None:
                raise PolicyError("Fixed step policy needs a value for tau")
            if not 0.0 < self.tau < 2.0:
                raise PolicyError(f"Step size tau={self.tau} outside (0, 2)")
        lo, hi = self.bracket
        if not (0.0 < lo < hi < 2.0):
            raise PolicyError(f"Line-search bracket {self.bracket} must satisfy 0 < lo < hi < 2")
        return self

    @classmethod
    def fixed(cls, tau: float) -> "StepPolicy":
        return cls(mode="fixed", tau=tau)

    @classmethod
    def adaptive(cls, **kwargs) -> "StepPolicy":
        return cls(mode="adaptive", **kwargs)


class StopCriteria(BaseModel):
    energy_tol: float = Field(1e-9, gt=0)
    residual_tol: float = Field(1e-8, gt=0)
    max_iters: int = Field(10000, ge=1)


class IterationRecord(BaseModel):
    n: int
    energy: float
    energy_before: float
    gamma: float
    tau: float
    mass_after: float
    mass_intermediate: float
    step_norm_R: float
    residual: float
    residual_max: float
    lam: float
    tangency: float
    energy_identity_gap: Optional[float] = None
    mass_identity_gap: Optional[float] = None
    pythagoras_gap: Optional[float] = None
    step_bound_ok: Optional[bool] = None
    small_step_bound_ok: Optional[bool] = None
    dissipation_ratio: Optional[float] = None
    stationary: bool = False
    energy_error: Optional[float] = None
    h1_error: Optional[float] = None
    density_error: Optional[float] = None


class Trace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    records: List[IterationRecord] = []
    initial_energy: float
    final_state: Any = None
    final_lambda: float = float("nan")
    stop_reason: Literal["tol_reached", "max_iters", "diverged"] = "max_iters"
    metric: Literal["adaptive", "h1"] = "adaptive"
    policy: StepPolicy
    # per-iterate states u^0, u^1, ... when retention is on
    states: Optional[List[Any]] = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    def energies(self) -> List[float]:
        return [self.initial_energy] + [r.energy for r in self.records]
