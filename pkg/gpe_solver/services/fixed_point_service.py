# ===================================
# services/fixed_point_service.py
# ===================================
"""
The iteration written as a fixed-point map and its Frechet derivatives.

    psi(v)       = A_v^{-1} M v,             A_v = S + beta M_v
    gamma(v)     = 1 / (v, psi(v))_L2
    psi_tau(v)   = (1 - tau) v + tau gamma(v) psi(v)
    phi_tau(v)   = psi_tau(v) / ||psi_tau(v)||
    theta_u(v)   = conj( int psi_tau(v) conj(u) )
    locked map   = Theta_u(v) phi_tau(v),    Theta_u = theta_u / |theta_u|

Derivatives are real-linear maps h -> ..., evaluated for a given direction h.
"""
import logging
from typing import Optional

import numpy as np

from gpe_solver.core.exceptions import PhaseDegenerateError
from gpe_solver.services.forms_service import FormSet, State, forms_service
from gpe_solver.services.linalg_service import LinearOperator, linalg_service

logger = logging.getLogger(__name__)

PHASE_THRESHOLD = 1e-14


class FixedPointService:
    def __init__(self, precond: Optional[str] = None):
        self.precond = precond

    def _solve(self, forms: FormSet, v: State, rhs: np.ndarray) -> np.ndarray:
        Mv = forms_service.assemble_weighted_mass(forms, v)
        A = LinearOperator(terms=[(1.0, forms.S), (forms.beta, Mv)])
        return linalg_service.solve_spd(A, rhs, precond=self.precond)

    # ---------- maps ----------

    def psi(self, forms: FormSet, v: State) -> State:
        return v.with_coeffs(self._solve(forms, v, forms.M @ v.coeffs))

    def gamma(self, forms: FormSet, v: State, psi_v: Optional[State] = None) -> float:
        psi_v = psi_v or self.psi(forms, v)
        return 1.0 / forms.l2_inner(v, psi_v)

    def psi_tau(self, forms: FormSet, v: State, tau: float) -> State:
        psi_v = self.psi(forms, v)
        g = self.gamma(forms, v, psi_v)
        return v.with_coeffs((1.0 - tau) * v.coeffs + tau * g * psi_v.coeffs)

    def phi_tau(self, forms: FormSet, v: State, tau: float) -> State:
        return forms.normalize(self.psi_tau(forms, v, tau))[0]

    def theta(self, forms: FormSet, v: State, u_ref: State, tau: float, psi_tau_v: Optional[State] = None) -> complex:
        psi_tau_v = psi_tau_v or self.psi_tau(forms, v, tau)
        return np.conj(forms_service.complex_inner(forms.M, psi_tau_v, u_ref))

    def locked_step(self, forms: FormSet, v: State, u_ref: State, tau: float) -> State:
        """Theta_u(v) phi_tau(v): one step of the phase-locked iteration."""
        p = self.psi_tau(forms, v, tau)
        th = self.theta(forms, v, u_ref, tau, p)
        if abs(th) <= PHASE_THRESHOLD:
            raise PhaseDegenerateError(f"Phase of the auxiliary step is undefined (|theta| = {abs(th):.3e})", th)
        phi = forms.normalize(p)[0]
        return State.from_values(v.mesh, (th / abs(th)) * phi.values)

    # ---------- derivatives ----------

    def psi_prime(self, forms: FormSet, v: State, h: State, psi_v: Optional[State] = None) -> State:
        """A_v^{-1}(M h - 2 beta (Re(v conj h) psi(v), .))."""
        psi_v = psi_v or self.psi(forms, v)
        rhs = forms.M @ h.coeffs
        if forms.beta != 0.0:
            P = forms_service.assemble_coupling(forms, v, psi_v)
            rhs = rhs - 2.0 * forms.beta * (P @ h.coeffs)
        return h.with_coeffs(self._solve(forms, v, rhs))

    def gamma_prime(self, forms: FormSet, v: State, h: State, psi_v: Optional[State] = None) -> float:
        psi_v = psi_v or self.psi(forms, v)
        g = self.gamma(forms, v, psi_v)
        dpsi = self.psi_prime(forms, v, h, psi_v)
        return -g * g * (forms.l2_inner(psi_v, h) + forms.l2_inner(dpsi, v))

    def psi_tau_prime(self, forms: FormSet, v: State, h: State, tau: float) -> State:
        psi_v = self.psi(forms, v)
        g = self.gamma(forms, v, psi_v)
        dpsi = self.psi_prime(forms, v, h, psi_v)
        dg = -g * g * (forms.l2_inner(psi_v, h) + forms.l2_inner(dpsi, v))
        coeffs = (1.0 - tau) * h.coeffs + tau * dg * psi_v.coeffs + tau * g * dpsi.coeffs
        return h.with_coeffs(coeffs)

    def phi_tau_prime(self, forms: FormSet, v: State, h: State, tau: float) -> State:
        p = self.psi_tau(forms, v, tau)
        dp = self.psi_tau_prime(forms, v, h, tau)
        norm = np.sqrt(forms.mass(p))
        coeffs = dp.coeffs / norm - p.coeffs * forms.l2_inner(p, dp) / norm ** 3
        return h.with_coeffs(coeffs)

    def theta_prime(self, forms: FormSet, v: State, u_ref: State, h: State, tau: float) -> complex:
        dp = self.psi_tau_prime(forms, v, h, tau)
        return np.conj(forms_service.complex_inner(forms.M, dp, u_ref))

    def big_theta_prime(self, forms: FormSet, v: State, u_ref: State, h: State, tau: float) -> complex:
        """Derivative of Theta_u = theta / |theta|; equals i Im theta'(u)h at a fixed point."""
        th = self.theta(forms, v, u_ref, tau)
        dth = self.theta_prime(forms, v, u_ref, h, tau)
        r = abs(th)
        return dth / r - th * (np.conj(th) * dth).real / r ** 3

    def locked_step_prime(self, forms: FormSet, v: State, u_ref: State, h: State, tau: float) -> State:
        """Product rule on Theta_u(v) phi_tau(v); valid at any v."""
        p = self.psi_tau(forms, v, tau)
        th = self.theta(forms, v, u_ref, tau, p)
        phi = forms.normalize(p)[0]
        dphi = self.phi_tau_prime(forms, v, h, tau)
        dTheta = self.big_theta_prime(forms, v, u_ref, h, tau)
        values = dTheta * phi.values + (th / abs(th)) * dphi.values
        return State.from_values(v.mesh, values)

    def locked_derivative_at_fixed_point(self, forms: FormSet, u: State, h: State, tau: float) -> State:
        """psi_tau'(u)h - (psi_tau'(u)h, u) u + Im(theta_u'(u)h) i u, for a normalized fixed point u."""
        dp = self.psi_tau_prime(forms, u, h, tau)
        dth = self.theta_prime(forms, u, u, h, tau)
        values = dp.values - forms.l2_inner(dp, u) * u.values + dth.imag * 1j * u.values
        return State.from_values(u.mesh, values)


fixed_point_service = FixedPointService()
