# ===================================
# services/solver_service.py
# ===================================
"""
Energy-adaptive Riemannian gradient method on the L2 unit sphere.

One step, with A_u = S + beta M_u:

    q = A_u^{-1} M u,   gamma = 1 / (u, q)_L2,   d = -u + gamma q
    u_hat = u + tau d,  u_next = u_hat / ||u_hat||_L2

tau is fixed or minimizes the energy along the normalized ray, which is a
rational function of tau whose coefficients come from M, S, M_u and the two
line-search matrices Xi_ud, Xi_dd. The same machinery drives the H^1-metric
comparison method with d = -P(g).
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Polynomial

from gpe_solver.core.config import settings
from gpe_solver.core.exceptions import DegenerateIterateError, DissipationViolationError
from gpe_solver.models.solver import IterationRecord, StepPolicy, StopCriteria, Trace
from gpe_solver.models.spectral import RateSample
from gpe_solver.services.fixed_point_service import FixedPointService
from gpe_solver.services.forms_service import FormSet, State, forms_service
from gpe_solver.services.linalg_service import LinearOperator, linalg_service
from gpe_solver.utils.validators import all_finite

logger = logging.getLogger(__name__)

ENERGY_INCREASE_TOL = 1e-12
RATE_FLOOR = 1e-14


class LineSearch(NamedTuple):
    g: Callable[[float], float]
    tau: float
    stationary: bool


class Residual(NamedTuple):
    lam: float
    res_l2: float
    res_max: float


class PhaseAlignment(NamedTuple):
    omega: float
    err: float


@dataclass
class ReferenceSolution:
    energy: float
    state: Optional[State] = None


@dataclass
class _StepData:
    u: State
    d: State
    tau: float
    gamma: float
    Mu: sp.csr_matrix
    stationary: bool
    xi_ud: sp.csr_matrix
    xi_dd: sp.csr_matrix


def linearized_operator(forms: FormSet, Mu: sp.spmatrix) -> LinearOperator:
    return LinearOperator(terms=[(1.0, forms.S), (forms.beta, Mu)])


def line_search_g(
    coeffs: dict,
    beta: float,
    bracket: Tuple[float, float] = settings.LINE_SEARCH_BRACKET,
    tol: float = settings.LINE_SEARCH_TOL,
) -> LineSearch:
    """
    g(tau) = E((u + tau d) / ||u + tau d||) as a rational function of tau,
    and its bracketed minimizer. d = 0 returns the lower end.

    With g = N / m^2, N = Q m / 2 + beta P / 4, the critical points are the
    roots of the quintic N' m - 2 N m', polished by Newton steps.
    """
    z0, z1, z2 = coeffs["zeta0"], coeffs["zeta1"], coeffs["zeta2"]
    e0, e1, e2 = coeffs.get("eta0", 1.0), coeffs["eta1"], coeffs["eta2"]
    x0, x1, x2, x3, x4 = (coeffs[f"xi{k}"] for k in range(5))

    m = Polynomial([e0, 2.0 * e1, e2])
    Q = Polynomial([z0, 2.0 * z1, z2])
    P = Polynomial([x0, 4.0 * x1, 2.0 * x2, 4.0 * x3, x4])
    N = 0.5 * Q * m + 0.25 * beta * P

    def g(tau: float) -> float:
        mass = m(tau)
        return float(N(tau) / mass ** 2)

    lo, hi = bracket
    if e2 == 0.0 and z2 == 0.0:
        return LineSearch(g=g, tau=lo, stationary=True)

    dg = N.deriv() * m - 2.0 * N * m.deriv()
    candidates = [lo, hi]
    if np.any(dg.coef != 0.0):
        ddg = dg.deriv()
        for root in dg.roots():
            if abs(root.imag) > np.sqrt(tol) * (1.0 + abs(root.real)):
                continue
            tau = float(root.real)
            for _ in range(3):
                slope = ddg(tau)
                if slope == 0.0:
                    break
                tau -= dg(tau) / slope
            if lo < tau < hi:
                candidates.append(tau)
    best = min(candidates, key=g)
    return LineSearch(g=g, tau=float(best), stationary=False)


class SolverService:
    def __init__(self, precond: Optional[str] = None):
        self.refresh_interval = settings.M_U_REFRESH_INTERVAL
        self.divergence_streak = settings.DIVERGENCE_STREAK
        self.log_every = settings.LOG_EVERY
        # None follows linalg_service; "direct" gives exact factorized solves
        self.precond = precond
        self.fixed_point = FixedPointService(precond)

    # ---------- building blocks ----------

    def gamma(self, forms: FormSet, u: State, q: State) -> float:
        pairing = forms.l2_inner(u, q)
        if not pairing > 0.0:
            raise DegenerateIterateError(f"(u, A_u^-1 M u) = {pairing} is not positive")
        return 1.0 / pairing

    def descent_direction(
        self, forms: FormSet, u: State, Mu: Optional[sp.spmatrix] = None, q0: Optional[np.ndarray] = None
    ) -> Tuple[State, State, float]:
        if Mu is None:
            Mu = forms_service.assemble_weighted_mass(forms, u)
        A = linearized_operator(forms, Mu)
        q = u.with_coeffs(linalg_service.solve_spd(A, forms.M @ u.coeffs, precond=self.precond, x0=q0))
        g = self.gamma(forms, u, q)
        d = u.with_coeffs(-u.coeffs + g * q.coeffs)
        return d, q, g

    def h1_direction(self, forms: FormSet, u: State, Mu: sp.spmatrix) -> Tuple[State, float]:
        """d = -P(g) with g the X-Riesz representative of E'(u), projected in X onto T_u."""
        grad = forms.h1_solve(linearized_operator(forms, Mu) @ u.coeffs)
        z = forms.h1_solve(forms.M @ u.coeffs)
        Mu_c = forms.M @ u.coeffs
        scale = float(grad @ Mu_c) / float(z @ Mu_c)
        projected = grad - scale * z
        return u.with_coeffs(-projected), scale

    def gp_residual(self, forms: FormSet, u: State, Mu: Optional[sp.spmatrix] = None) -> Residual:
        """Rayleigh value and the mass-solved residual of A_u u = lambda M u (L2 and nodal max)."""
        if Mu is None:
            Mu = forms_service.assemble_weighted_mass(forms, u)
        Au = linearized_operator(forms, Mu) @ u.coeffs
        Mu_c = forms.M @ u.coeffs
        lam = float(u.coeffs @ Au) / float(u.coeffs @ Mu_c)
        r = Au - lam * Mu_c
        z = forms.mass_solve(r)
        res_l2 = float(np.sqrt(max(z @ r, 0.0)))
        res_max = float(np.abs(z.view(np.complex128)).max()) if z.size else 0.0
        return Residual(lam=lam, res_l2=res_l2, res_max=res_max)

    def phase_align(self, forms: FormSet, a: State, b: State, norm: str = "h1") -> PhaseAlignment:
        """min over omega of ||a - exp(i omega) b|| in the L2 or H^1 metric, in closed form."""
        G = forms.M if norm == "l2" else forms.h1
        z = forms_service.complex_inner(G, a, b)
        omega = float(np.angle(z)) if z != 0 else 0.0
        # the expanded form |a|^2 + |b|^2 - 2|z| cancels below ~1e-8
        diff = a.coeffs - forms_service.gauge(b, omega).coeffs
        err = float(np.sqrt(max(diff @ (G @ diff), 0.0)))
        return PhaseAlignment(omega=omega, err=err)

    def auxiliary_step(self, forms: FormSet, v: State, u_ref: State, tau: float) -> State:
        return self.fixed_point.locked_step(forms, v, u_ref, tau)

    # ---------- steps ----------

    def _choose_tau(self, forms, u, d, Mu, policy: StepPolicy):
        coeffs = forms_service.quartic_integrals(forms, u, d, Mu)
        if policy.mode == "fixed":
            stationary = coeffs["eta2"] == 0.0 and coeffs["zeta2"] == 0.0
            return policy.tau, stationary, coeffs
        search = line_search_g(coeffs, forms.beta, policy.bracket, policy.scalar_min_tol)
        if search.stationary:
            logger.debug("Line search met a zero direction; taking the lower bracket end")
        return search.tau, search.stationary, coeffs

    def _finish_step(
        self, forms: FormSet, step: _StepData, n: int, energy_before: float, identity: bool, strict: bool
    ) -> Tuple[State, IterationRecord, sp.csr_matrix]:
        u, d, tau, Mu = step.u, step.d, step.tau, step.Mu
        delta = d.coeffs * tau
        u_hat = u.with_coeffs(u.coeffs + delta)
        u_next, mass_hat = forms.normalize(u_hat)

        # M_{u+tau d} = M_u + 2 tau Xi_ud + tau^2 Xi_dd, then rescale
        Mu_next = ((Mu + 2.0 * tau * step.xi_ud + tau ** 2 * step.xi_dd) / mass_hat ** 2).tocsr()

        energy = forms_service.energy(forms, u_next)
        A = linearized_operator(forms, Mu)
        Mu_c = forms.M @ u.coeffs
        step_R2 = float(delta @ (forms.S @ delta))
        record = dict(
            n=n,
            energy=energy,
            energy_before=energy_before,
            gamma=step.gamma,
            tau=tau,
            mass_after=float(np.sqrt(forms.mass(u_next))),
            mass_intermediate=mass_hat,
            step_norm_R=float(np.sqrt(max(step_R2, 0.0))),
            tangency=abs(float(delta @ Mu_c)),
            stationary=step.stationary,
        )

        # mass growth: ||u_hat|| - 1 = (u - u_next, u) / (u_next, u)
        pairing = forms.l2_inner(u_next, u)
        record["mass_identity_gap"] = abs((mass_hat - 1.0) - (1.0 - pairing) / pairing)
        # ||u_hat||^2 = ||u||^2 + ||u_hat - u||^2 by tangency
        record["pythagoras_gap"] = abs(mass_hat ** 2 - forms.mass(u) - float(delta @ (forms.M @ delta)))

        Au_u = float(u.coeffs @ (A @ u.coeffs))
        bound = tau ** 2 * Au_u
        record["step_bound_ok"] = bool(
            step_R2 <= bound * (1.0 + 1e-10) + 1e-14 and bound <= 4.0 * tau ** 2 * energy_before * (1.0 + 1e-10)
        )

        drop_hat = None
        if identity:
            e_hat = forms_service.energy(forms, u_hat)
            drop_hat = energy_before - e_hat
            rhs = (
                -0.25 * forms.beta * forms_service.density_defect(forms, u, u_hat)
                + (1.0 / tau - 0.5) * float(delta @ (A @ delta))
            )
            record["energy_identity_gap"] = abs(drop_hat - rhs)

        if tau <= 0.5:
            if drop_hat is None:
                drop_hat = energy_before - forms_service.energy(forms, u_hat)
            step_state = u.with_coeffs(delta)
            lower = -0.75 * forms.beta * forms_service.quartic(forms, step_state) + (1.0 / tau - 0.5) * step_R2
            record["small_step_bound_ok"] = bool(drop_hat >= lower - 1e-12 * max(1.0, abs(energy_before)))

        diff = u_next.coeffs - u.coeffs
        h1_sq = float(diff @ (forms.h1 @ diff))
        if h1_sq > 0.0:
            record["dissipation_ratio"] = (energy_before - energy) / h1_sq

        res = self.gp_residual(forms, u_next, Mu_next)
        record.update(residual=res.res_l2, residual_max=res.res_max, lam=res.lam)

        increase = energy - energy_before
        if strict and increase > ENERGY_INCREASE_TOL:
            raise DissipationViolationError(
                f"Energy increased by {increase:.3e} at step {n} with tau={tau}", increase
            )
        return u_next, IterationRecord(**record), Mu_next

    def gradient_step(
        self,
        forms: FormSet,
        u: State,
        policy: StepPolicy,
        Mu: Optional[sp.spmatrix] = None,
        n: int = 0,
        energy_before: Optional[float] = None,
        q0: Optional[np.ndarray] = None,
        strict: bool = False,
    ) -> Tuple[State, IterationRecord, sp.csr_matrix]:
        if Mu is None:
            Mu = forms_service.assemble_weighted_mass(forms, u)
        if energy_before is None:
            energy_before = forms_service.energy(forms, u)
        d, q, g = self.descent_direction(forms, u, Mu, q0)
        tau, stationary, coeffs = self._choose_tau(forms, u, d, Mu, policy)
        step = _StepData(u, d, tau, g, Mu, stationary, coeffs["xi_ud"], coeffs["xi_dd"])
        return self._finish_step(forms, step, n, energy_before, True, strict)

    def h1_gradient_step(
        self,
        forms: FormSet,
        u: State,
        policy: StepPolicy,
        Mu: Optional[sp.spmatrix] = None,
        n: int = 0,
        energy_before: Optional[float] = None,
        strict: bool = False,
    ) -> Tuple[State, IterationRecord, sp.csr_matrix]:
        if Mu is None:
            Mu = forms_service.assemble_weighted_mass(forms, u)
        if energy_before is None:
            energy_before = forms_service.energy(forms, u)
        d, scale = self.h1_direction(forms, u, Mu)
        tau, stationary, coeffs = self._choose_tau(forms, u, d, Mu, policy)
        step = _StepData(u, d, tau, scale, Mu, stationary, coeffs["xi_ud"], coeffs["xi_dd"])
        # the exact energy identity belongs to the adaptive metric only
        return self._finish_step(forms, step, n, energy_before, False, strict)

    # ---------- orchestration ----------

    def run(
        self,
        forms: FormSet,
        u0: State,
        policy: StepPolicy,
        stop: Optional[StopCriteria] = None,
        reference: Optional[ReferenceSolution] = None,
        metric: str = "adaptive",
        retain_states: bool = False,
        strict: bool = False,
    ) -> Trace:
        stop = stop or StopCriteria()
        forms.check(u0)
        u, _ = forms.normalize(u0)
        Mu = forms_service.assemble_weighted_mass(forms, u)
        energy = forms_service.energy(forms, u)
        trace = Trace(initial_energy=energy, policy=policy, metric=metric)
        if retain_states:
            trace.states = [u]

        streak = 0
        logger.info(
            f"Starting {metric} run ({policy.mode}{'' if policy.tau is None else f', tau={policy.tau}'}): "
            f"E0={energy:.12g}, max_iters={stop.max_iters}"
        )
        for n in range(stop.max_iters):
            if n > 0 and n % self.refresh_interval == 0:
                Mu = forms_service.assemble_weighted_mass(forms, u)
                logger.debug(f"Refreshed M_u at step {n}")

            if metric == "h1":
                u_next, record, Mu = self.h1_gradient_step(forms, u, policy, Mu, n, energy, strict)
            else:
                # q = A_u^-1 M u is close to u / lambda once the run settles
                q0 = None if not trace.records else u.coeffs / trace.records[-1].lam
                u_next, record, Mu = self.gradient_step(forms, u, policy, Mu, n, energy, q0, strict)

            if not (all_finite(u_next.coeffs) and np.isfinite(record.energy)):
                raise DegenerateIterateError(f"Iterate became non-finite at step {n} (tau={record.tau})")

            if reference is not None:
                record.energy_error = record.energy - reference.energy
                if reference.state is not None:
                    record.h1_error = self.phase_align(forms, u_next, reference.state, "h1").err
                    record.density_error = forms_service.density_error(forms, reference.state, u_next)

            trace.records.append(record)
            if retain_states:
                trace.states.append(u_next)

            change = record.energy - energy
            streak = streak + 1 if change > ENERGY_INCREASE_TOL else 0
            u, energy = u_next, record.energy

            if self.log_every and (n + 1) % self.log_every == 0:
                logger.info(f"n={n + 1} E={energy:.12g} res={record.residual:.3e} tau={record.tau:.6f}")

            if streak >= self.divergence_streak:
                trace.stop_reason = "diverged"
                break
            if reference is not None and abs(record.energy_error) < stop.energy_tol:
                trace.stop_reason = "tol_reached"
                break
            if abs(change) < stop.energy_tol and record.residual < stop.residual_tol:
                trace.stop_reason = "tol_reached"
                break

        trace.final_state = u
        trace.final_lambda = trace.records[-1].lam
        logger.info(
            f"Run stopped ({trace.stop_reason}) after {trace.iterations} iterations: "
            f"E={energy:.12g}, lambda={trace.final_lambda:.10g}"
        )
        return trace

    def run_auxiliary(self, forms: FormSet, u0: State, u_ref: State, tau: float, steps: int) -> List[State]:
        """Phase-locked iterates starting from the normalized u0."""
        v, _ = forms.normalize(u0)
        states = [v]
        for _ in range(steps):
            v = self.auxiliary_step(forms, v, u_ref, tau)
            states.append(v)
        return states

    def contraction_rates(self, forms: FormSet, trace: Trace, u_ref: State) -> List[RateSample]:
        """r(n) = e(n+1) / e(n) with e the phase-aligned H^1 distance to u_ref."""
        if not trace.states:
            return []
        samples = []
        aligned = [self.phase_align(forms, s, u_ref, "h1") for s in trace.states]
        for n in range(len(aligned) - 1):
            if aligned[n].err < RATE_FLOOR:
                break
            samples.append(
                RateSample(
                    n=n,
                    rate=aligned[n + 1].err / aligned[n].err,
                    omega=aligned[n + 1].omega,
                    h1_error=aligned[n + 1].err,
                )
            )
        return samples


solver_service = SolverService()
