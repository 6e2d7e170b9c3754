# ===================================
# services/check_service.py
# ===================================
"""Invariant battery for a short run: the checks behind `gpe-solver check`."""
import logging
from typing import List, Optional

import numpy as np

from gpe_solver.models.common import CheckReport, CheckResult
from gpe_solver.models.solver import StepPolicy, StopCriteria, Trace
from gpe_solver.services.forms_service import FormSet, State, forms_service
from gpe_solver.services.solver_service import SolverService, line_search_g, solver_service

logger = logging.getLogger(__name__)

MASS_TOL = 1e-12
TANGENCY_TOL = 1e-10
IDENTITY_TOL = 1e-11
PYTHAGORAS_TOL = 1e-12
GAUGE_TOL = 1e-9
AUXILIARY_TOL = 1e-10
LINE_SEARCH_TOL = 1e-11
LINE_SEARCH_SAMPLES = (0.1, 0.5, 1.0, 1.7)


def _result(name: str, defect: float, threshold: float, message: Optional[str] = None) -> CheckResult:
    return CheckResult(
        name=name,
        passed=bool(np.isfinite(defect) and defect <= threshold),
        defect=float(defect),
        threshold=threshold,
        message=message,
    )


class CheckService:
    def _record_checks(self, trace: Trace) -> List[CheckResult]:
        records = trace.records
        scale = max(1.0, abs(trace.initial_energy))
        mass = max(abs(r.mass_after - 1.0) for r in records)
        tangency = max(r.tangency for r in records)
        identity = max((r.energy_identity_gap or 0.0) for r in records) / scale
        pythagoras = max((r.pythagoras_gap or 0.0) for r in records)
        growth = max(max(0.0, 1.0 - r.mass_intermediate) for r in records)
        return [
            _result("mass", mass, MASS_TOL, "||u^{n+1}||_L2 = 1"),
            _result("tangency", tangency, TANGENCY_TOL, "(u_hat - u, u)_L2 = 0"),
            _result("energy_identity", identity, IDENTITY_TOL, "exact energy-dissipation identity"),
            _result("pythagoras", pythagoras, PYTHAGORAS_TOL, "||u_hat||^2 = 1 + ||u_hat - u||^2"),
            _result("mass_growth", growth, MASS_TOL, "||u_hat||_L2 >= 1"),
        ]

    def gauge_check(self, forms: FormSet, u0: State, policy: StepPolicy, steps: int, omega: float) -> CheckResult:
        stop = StopCriteria(max_iters=steps, energy_tol=1e-300, residual_tol=1e-300)
        plain = solver_service.run(forms, u0, policy, stop)
        rotated = solver_service.run(forms, forms_service.gauge(u0, omega), policy, stop)
        expected = forms_service.gauge(plain.final_state, omega)
        diff = expected.coeffs - rotated.final_state.coeffs
        defect = float(np.sqrt(max(diff @ (forms.M @ diff), 0.0)))
        return _result("gauge_equivariance", defect, GAUGE_TOL, f"run(G_w u0) = G_w run(u0), w={omega:.6f}")

    def auxiliary_check(self, forms: FormSet, u0: State, tau: float, steps: int) -> CheckResult:
        """Locked iterates equal Theta_u(u^{n-1}) u^n when both start from u0."""
        # both sides with factorized solves, so they differ by the phase alone
        exact = SolverService(precond="direct")
        exact.log_every = 0
        u_ref, _ = forms.normalize(u0)
        locked = exact.run_auxiliary(forms, u0, u_ref, tau, steps)
        stop = StopCriteria(max_iters=steps, energy_tol=1e-300, residual_tol=1e-300)
        plain = exact.run(forms, u0, StepPolicy.fixed(tau), stop, retain_states=True)
        worst = 0.0
        for n in range(1, min(len(locked), len(plain.states))):
            prev = plain.states[n - 1]
            th = exact.fixed_point.theta(forms, prev, u_ref, tau)
            predicted = State.from_values(forms.mesh, (th / abs(th)) * plain.states[n].values)
            diff = predicted.coeffs - locked[n].coeffs
            worst = max(worst, float(np.sqrt(max(diff @ (forms.M @ diff), 0.0))))
        return _result("auxiliary_relation", worst, AUXILIARY_TOL, f"{steps} locked steps, tau={tau}")

    def line_search_check(self, forms: FormSet, u0: State) -> CheckResult:
        u, _ = forms.normalize(u0)
        d, _, _ = solver_service.descent_direction(forms, u)
        coeffs = forms_service.quartic_integrals(forms, u, d)
        search = line_search_g(coeffs, forms.beta)
        worst = 0.0
        for tau in LINE_SEARCH_SAMPLES:
            direct = forms_service.energy(forms, forms.normalize(u.with_coeffs(u.coeffs + tau * d.coeffs))[0])
            worst = max(worst, abs(search.g(tau) - direct) / max(1.0, abs(direct)))
        return _result("line_search_oracle", worst, LINE_SEARCH_TOL, f"tau in {LINE_SEARCH_SAMPLES}")

    def run_battery(
        self,
        forms: FormSet,
        u0: State,
        policy: StepPolicy,
        steps: int = 20,
        aux_steps: int = 20,
        seed: int = 0,
    ) -> CheckReport:
        rng = np.random.default_rng(seed)
        omega = float(rng.uniform(0.0, 2.0 * np.pi))
        stop = StopCriteria(max_iters=steps, energy_tol=1e-300, residual_tol=1e-300)
        trace = solver_service.run(forms, u0, policy, stop)

        results = self._record_checks(trace)
        results.append(self.gauge_check(forms, u0, policy, steps, omega))
        tau = policy.tau if policy.mode == "fixed" else 1.0
        results.append(self.auxiliary_check(forms, u0, tau, aux_steps))
        results.append(self.line_search_check(forms, u0))

        for r in results:
            level = logging.INFO if r.passed else logging.ERROR
            logger.log(level, f"check {r.name}: defect={r.defect:.3e} (threshold {r.threshold:.0e})")
        report = CheckReport(
            success=all(r.passed for r in results),
            message="all invariants hold" if all(r.passed for r in results) else "invariant failures",
            data=results,
        )
        return report


check_service = CheckService()
