# ===================================
# services/spectral_service.py
# ===================================
"""
Spectral diagnostics at a converged state u with eigenvalue lambda:

- spectrum of A_u = S + beta M_u against M (unconstrained)
- spectrum of E''(u) = A_u + 2 beta N_u against M on the complement of u
- the weighted problem (lambda M - 2 beta N_u) v = mu A_u v on the
  M-complement of {u, iu}, and the contraction constant
  rho*(tau) = max_i |1 - tau + tau mu_i| it induces
"""
import logging
from typing import Dict, List, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from gpe_solver.core.config import settings
from gpe_solver.core.exceptions import ConvergenceError
from gpe_solver.models.spectral import SpectralReport
from gpe_solver.services.forms_service import FormSet, State, forms_service
from gpe_solver.services.linalg_service import (
    DENSE_LIMIT,
    ConstraintSet,
    EigenPair,
    LinearOperator,
    linalg_service,
)
from gpe_solver.services.solver_service import linearized_operator, solver_service

logger = logging.getLogger(__name__)

LAMBDA_MATCH_TOL = 1e-6
BOUND_SLACK = 1e-7
# shift below the weighted spectrum, which lies in (-1, 1)
WEIGHTED_SHIFT = -1.05
RHO_SAMPLE_TAUS = tuple(np.round(np.linspace(0.0, 2.0, 41), 10))


class HessianSpectrum(NamedTuple):
    pairs: List[EigenPair]
    iu_alignment: float


class AuSpectrum(NamedTuple):
    pairs: List[EigenPair]
    lambda_index: Optional[int]  # 1-based


class WeightedSpectrum(NamedTuple):
    mu: List[float]
    vectors: List[np.ndarray]  # M-normalized
    residuals: List[float]


class TauLimits(NamedTuple):
    tau_pos: float
    tau_neg: float
    active: str


def rho_star(mu_list: List[float], tau: float) -> float:
    mu = np.asarray(mu_list, dtype=float)
    return float(np.max(np.abs(1.0 - tau + tau * mu)))


def tau_limits(mu_list: List[float], lambda1: float, lambda2: float, delta1: float) -> TauLimits:
    """Step sizes up to which rho*(tau) < 1; the active one follows the sign of the dominant mu."""
    tau_pos = 1.0 + (lambda2 - lambda1) / (lambda2 + lambda1)
    tau_neg = 1.0 + delta1 / (2.0 * lambda1 + delta1)
    dominant = max(mu_list, key=abs)
    return TauLimits(tau_pos=tau_pos, tau_neg=tau_neg, active="positive" if dominant > 0 else "negative")


class SpectralService:
    def __init__(self):
        self.tol = settings.EIGEN_TOL
        self.residual_gate = settings.SPECTRUM_RESIDUAL_GATE

    def hessian_operator(self, forms: FormSet, u: State, Mu: Optional[sp.spmatrix] = None) -> LinearOperator:
        if Mu is None:
            Mu = forms_service.assemble_weighted_mass(forms, u)
        terms = [(1.0, forms.S), (forms.beta, Mu)]
        if forms.beta != 0.0:
            terms.append((2.0 * forms.beta, forms_service.hessian_extra(forms, u)))
        return LinearOperator(terms=terms)

    def delta1(self, forms: FormSet) -> float:
        return linalg_service.smallest_eigenpairs(forms.S, forms.M, 1, tol=self.tol)[0].value

    def hessian_spectrum(self, forms: FormSet, u: State, k: int = 6) -> HessianSpectrum:
        H = self.hessian_operator(forms, u)
        constraints = ConstraintSet(vectors=[u.coeffs], metric=forms.M)
        pairs = linalg_service.smallest_eigenpairs(H, forms.M, k, constraints, tol=self.tol)
        iu = forms_service.times_i(u)
        v1 = pairs[0].vector
        alignment = abs(float(v1 @ (forms.M @ iu.coeffs))) / np.sqrt(forms.mass(iu))
        return HessianSpectrum(pairs=pairs, iu_alignment=alignment)

    def a_u_spectrum(self, forms: FormSet, u: State, k: int = 25, lam: Optional[float] = None) -> AuSpectrum:
        Mu = forms_service.assemble_weighted_mass(forms, u)
        if lam is None:
            lam = solver_service.gp_residual(forms, u, Mu).lam
        # A_u is complex-linear, so the real layout repeats every eigenvalue (v and iv)
        pairs = linalg_service.smallest_eigenpairs(linearized_operator(forms, Mu), forms.M, 2 * k, tol=self.tol)[0::2]
        index = None
        for i, p in enumerate(pairs):
            if abs(p.value - lam) <= LAMBDA_MATCH_TOL * abs(lam):
                index = i + 1
                break
        if index is None:
            logger.info(f"lambda={lam:.10g} not among the {k} smallest eigenvalues of A_u")
        return AuSpectrum(pairs=pairs, lambda_index=index)

    def weighted_evp(self, forms: FormSet, u: State, lam: float, k: int = 5) -> WeightedSpectrum:
        """Largest-|mu| eigenpairs, searched from both ends of the spectrum."""
        Mu = forms_service.assemble_weighted_mass(forms, u)
        A = linearized_operator(forms, Mu).matrix()
        Bw = lam * forms.M
        if forms.beta != 0.0:
            Bw = Bw - 2.0 * forms.beta * forms_service.hessian_extra(forms, u)
        Bw = sp.csr_matrix(Bw)
        iu = forms_service.times_i(u)
        constraints = ConstraintSet(vectors=[u.coeffs, iu.coeffs], metric=forms.M)
        free = A.shape[0] - constraints.size

        if 2 * k >= free or A.shape[0] <= DENSE_LIMIT:
            pairs = linalg_service.dense_oracle(Bw, A, free, constraints)
            found = [(p.value, p.vector, p.residual) for p in pairs]
        else:
            top = linalg_service.smallest_eigenpairs(-Bw, A, k, constraints, tol=self.tol, sigma=WEIGHTED_SHIFT)
            bottom = linalg_service.smallest_eigenpairs(Bw, A, k, constraints, tol=self.tol, sigma=WEIGHTED_SHIFT)
            found = [(-p.value, p.vector, p.residual) for p in top] + [(p.value, p.vector, p.residual) for p in bottom]

        found.sort(key=lambda t: -abs(t[0]))
        found = found[:k]
        mu, vectors, residuals = [], [], []
        for value, vec, res in found:
            mu.append(float(value))
            vectors.append(vec / np.sqrt(vec @ (forms.M @ vec)))
            residuals.append(float(res))
        return WeightedSpectrum(mu=mu, vectors=vectors, residuals=residuals)

    def coercivity_defect(
        self, forms: FormSet, u: State, lam: float, lambda1: float, lambda2: float, samples: int = 50, seed: int = 0
    ) -> float:
        """min over random w in T_u and T_iu of <E''w,w> - lam|w|^2 - 1/2 min(1, l2/l1 - 1)|w|_R^2, |w|_R = 1."""
        rng = np.random.default_rng(seed)
        H = self.hessian_operator(forms, u).matrix()
        iu = forms_service.times_i(u)
        Y = linalg_service.constraint_basis(forms.M, ConstraintSet([u.coeffs, iu.coeffs], forms.M))
        c = 0.5 * min(1.0, lambda2 / lambda1 - 1.0)
        worst = np.inf
        for _ in range(samples):
            w = linalg_service.project(Y, forms.M, rng.standard_normal(forms.size))
            w = w / np.sqrt(w @ (forms.S @ w))
            gap = w @ (H @ w) - lam * (w @ (forms.M @ w)) - c
            worst = min(worst, float(gap))
        return worst

    def require_converged(self, forms: FormSet, u: State):
        res = solver_service.gp_residual(forms, u)
        if res.res_l2 > self.residual_gate:
            raise ConvergenceError(
                f"State is not converged enough for spectral diagnostics: residual {res.res_l2:.3e} "
                f"> {self.residual_gate:.1e}",
                best=u,
                residual=res.res_l2,
            )
        return res

    def spectral_report(
        self, forms: FormSet, u: State, k_a: int = 25, k_h: int = 6, k_mu: int = 5, seed: int = 0
    ) -> SpectralReport:
        res = self.require_converged(forms, u)
        lam = res.lam
        a_u = self.a_u_spectrum(forms, u, k_a, lam)
        hess = self.hessian_spectrum(forms, u, k_h)
        lambda1, lambda2 = hess.pairs[0].value, hess.pairs[1].value
        weighted = self.weighted_evp(forms, u, lam, k_mu)
        d1 = self.delta1(forms)
        limits = tau_limits(weighted.mu, lambda1, lambda2, d1)
        coercivity = self.coercivity_defect(forms, u, lam, lambda1, lambda2, seed=seed)

        iu = forms_service.times_i(u)
        constraint_defect = max(
            [abs(float(v @ (forms.M @ c))) for v in weighted.vectors for c in (u.coeffs, iu.coeffs)] or [0.0]
        )
        density_max = float(np.max(np.abs(u.values) ** 2)) if u.values.size else 0.0
        checks: Dict[str, bool] = {
            "mu_upper": max(weighted.mu) <= lambda1 / lambda2 + BOUND_SLACK,
            "mu_lower": min(weighted.mu) >= -lambda1 / (lambda1 + d1) - BOUND_SLACK,
            "mu_constraints": constraint_defect <= 1e-9,
            "lambda1_equals_lambda": abs(lambda1 - lam) <= BOUND_SLACK * abs(lam),
            "iu_alignment": hess.iu_alignment >= 1.0 - BOUND_SLACK,
            "coercivity": coercivity >= -1e-8,
            "delta1_below_lambda": d1 <= lam,
            "lambda_dominates_density": lam >= forms.beta * density_max,
        }
        residuals = (
            [p.residual for p in a_u.pairs] + [p.residual for p in hess.pairs] + list(weighted.residuals)
        )
        report = SpectralReport(
            lam=lam,
            residual=res.res_l2,
            a_u_eigs=[p.value for p in a_u.pairs],
            lambda_index_in_a_u=a_u.lambda_index,
            hess_eigs=[p.value for p in hess.pairs],
            lambda1=lambda1,
            lambda2=lambda2,
            iu_alignment=hess.iu_alignment,
            mu_list=weighted.mu,
            delta1=d1,
            rho_star_samples=[(float(t), rho_star(weighted.mu, t)) for t in RHO_SAMPLE_TAUS],
            rho_star_at_1=rho_star(weighted.mu, 1.0),
            tau_limits=(limits.tau_pos, limits.tau_neg),
            active_tau_limit=limits.active,
            mu_gap=abs(weighted.mu[0] - lambda1 / lambda2),
            coercivity_min_defect=coercivity,
            bound_checks=checks,
            max_eigen_residual=max(residuals),
        )
        failed = [name for name, ok in checks.items() if not ok]
        if failed:
            logger.warning(f"Spectral bound checks failed: {', '.join(failed)}")
        return report


spectral_service = SpectralService()
