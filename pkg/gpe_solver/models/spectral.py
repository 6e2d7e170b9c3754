# ===================================
# models/spectral.py
# ===================================
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel


class RateSample(BaseModel):
    n: int
    rate: float
    omega: float
    h1_error: float


class SpectralReport(BaseModel):
    lam: float
    residual: float
    a_u_eigs: List[float]
    lambda_index_in_a_u: Optional[int] = None  # 1-based, None when not within k
    hess_eigs: List[float]
    lambda1: float
    lambda2: float
    iu_alignment: float
    mu_list: List[float]
    delta1: float
    rho_star_samples: List[Tuple[float, float]]
    rho_star_at_1: float
    tau_limits: Tuple[float, float]
    active_tau_limit: str
    mu_gap: float
    coercivity_min_defect: float
    bound_checks: Dict[str, bool]
    max_eigen_residual: float

    @property
    def all_bounds_pass(self) -> bool:
        return all(self.bound_checks.values())
