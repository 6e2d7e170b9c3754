# ===================================
# models/model_params.py
# ===================================
import re
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from gpe_solver.core.exceptions import ConfigError

_HARMONIC = re.compile(r"^\s*harmonic\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)\s*$")
_EXPR = re.compile(r"^\s*expr\(.*\)\s*$")


class PotentialSpec(BaseModel):
    """Trapping potential V(x, y) = 1/2 ((ax x)^2 + (ay y)^2)."""

    kind: Literal["harmonic"] = "harmonic"
    ax: float = Field(0.9, ge=0)
    ay: float = Field(1.2, ge=0)

    @classmethod
    def parse(cls, text: str) -> "PotentialSpec":
        match = _HARMONIC.match(text)
        if match:
            try:
                return cls(ax=float(match.group(1)), ay=float(match.group(2)))
            except ValueError as e:
                raise ConfigError(f"Invalid harmonic potential '{text}': {e}")
        if _EXPR.match(text):
            raise ConfigError("Potential family 'expr(...)' is reserved but not implemented; use harmonic(ax, ay)")
        raise ConfigError(f"Unknown potential spec '{text}' (expected harmonic(ax, ay))")

    def __call__(self, x, y):
        return 0.5 * ((self.ax * np.asarray(x)) ** 2 + (self.ay * np.asarray(y)) ** 2)

    def __str__(self) -> str:
        return f"harmonic({self.ax!r}, {self.ay!r})"


class ModelParams(BaseModel):
    beta: float = Field(100.0, ge=0, description="Repulsion strength")
    omega: float = Field(1.2, description="Angular velocity")
    potential: PotentialSpec = Field(default_factory=PotentialSpec)
    trap_margin_K: Optional[float] = Field(None, gt=0, description="Constant K of the trapping condition")

    @field_validator("potential", mode="before")
    @classmethod
    def parse_potential(cls, v):
        if isinstance(v, str):
            return PotentialSpec.parse(v)
        return v
