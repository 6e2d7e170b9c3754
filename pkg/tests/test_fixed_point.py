# ===================================
# tests/test_fixed_point.py
# ===================================
import numpy as np
import pytest

from gpe_solver.core.exceptions import PhaseDegenerateError
from gpe_solver.models.model_params import ModelParams
from gpe_solver.models.solver import StepPolicy, StopCriteria
from gpe_solver.services.fixed_point_service import FixedPointService
from gpe_solver.services.forms_service import State, forms_service
from gpe_solver.services.mesh_service import build_mesh, gaussian_profile, interpolate
from gpe_solver.services.solver_service import SolverService

from tests.conftest import random_state

EPS = 1e-5

# factorized solves keep finite differences free of iteration noise
fps = FixedPointService(precond="direct")
exact = SolverService(precond="direct")


def central_difference(fn, v, h, eps=EPS):
    plus = fn(v.with_coeffs(v.coeffs + eps * h.coeffs))
    minus = fn(v.with_coeffs(v.coeffs - eps * h.coeffs))
    if isinstance(plus, State):
        return (plus.coeffs - minus.coeffs) / (2 * eps)
    return (plus - minus) / (2 * eps)


def rel_gap(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.fixture
def direction(forms):
    h = random_state(forms.mesh, seed=11)
    return h.with_coeffs(h.coeffs / np.sqrt(forms.mass(h)))


def test_psi_solves_linearized_problem(forms, u0):
    psi = fps.psi(forms, u0)
    Mu = forms_service.assemble_weighted_mass(forms, u0)
    lhs = forms.S @ psi.coeffs + forms.beta * (Mu @ psi.coeffs)
    assert rel_gap(lhs, forms.M @ u0.coeffs) < 1e-10


def test_one_locked_step_matches_gradient_step_up_to_phase(forms, u0):
    tau = 0.8
    locked = fps.locked_step(forms, u0, u0, tau)
    plain, _, _ = exact.gradient_step(forms, u0, StepPolicy.fixed(tau))
    assert exact.phase_align(forms, locked, plain, "l2").err < 1e-10
    # the phase is chosen so that int locked * conj(u0) is real and positive
    z = forms_service.complex_inner(forms.M, locked, u0)
    assert abs(z.imag) < 1e-12 and z.real > 0


def test_psi_derivative(forms, u0, direction):
    fd = central_difference(lambda v: fps.psi(forms, v), u0, direction)
    analytic = fps.psi_prime(forms, u0, direction).coeffs
    assert rel_gap(analytic, fd) < 1e-6


def test_gamma_derivative(forms, u0, direction):
    fd = central_difference(lambda v: fps.gamma(forms, v), u0, direction)
    analytic = fps.gamma_prime(forms, u0, direction)
    assert analytic == pytest.approx(fd, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("tau", [0.5, 1.0, 1.6])
def test_phi_tau_derivative(forms, u0, direction, tau):
    fd = central_difference(lambda v: fps.phi_tau(forms, v, tau), u0, direction)
    analytic = fps.phi_tau_prime(forms, u0, direction, tau).coeffs
    assert rel_gap(analytic, fd) < 1e-6


def test_theta_derivatives(forms, u0, direction):
    tau = 1.0
    u_ref = random_state(forms.mesh, seed=12)
    u_ref, _ = forms.normalize(u_ref)
    fd = central_difference(lambda v: fps.theta(forms, v, u_ref, tau), u0, direction)
    analytic = fps.theta_prime(forms, u0, u_ref, direction, tau)
    assert abs(analytic - fd) <= 1e-6 * max(abs(fd), 1e-3)

    def big_theta(v):
        th = fps.theta(forms, v, u_ref, tau)
        return th / abs(th)

    fd = central_difference(big_theta, u0, direction)
    analytic = fps.big_theta_prime(forms, u0, u_ref, direction, tau)
    assert abs(analytic - fd) <= 1e-6 * max(abs(fd), 1e-3)


def test_locked_step_derivative(forms, u0, direction):
    tau = 1.2
    u_ref = u0
    fd = central_difference(lambda v: fps.locked_step(forms, v, u_ref, tau), u0, direction)
    analytic = fps.locked_step_prime(forms, u0, u_ref, direction, tau).coeffs
    assert rel_gap(analytic, fd) < 1e-6


def test_fixed_point_is_reproduced(ground_state):
    forms, u, _ = ground_state
    for tau in (0.5, 1.0, 1.5):
        v = fps.locked_step(forms, u, u, tau)
        assert np.sqrt(forms.mass(v.with_coeffs(v.coeffs - u.coeffs))) < 1e-7


def test_derivative_at_fixed_point_matches_general_formula(ground_state):
    forms, u, _ = ground_state
    tau = 1.0
    h = random_state(forms.mesh, seed=13)
    h = h.with_coeffs(h.coeffs / np.sqrt(forms.mass(h)))
    special = fps.locked_derivative_at_fixed_point(forms, u, h, tau).coeffs
    general = fps.locked_step_prime(forms, u, u, h, tau).coeffs
    assert rel_gap(special, general) < 1e-6


def test_gauge_direction_is_annihilated_at_fixed_point(ground_state):
    forms, u, _ = ground_state
    iu = forms_service.times_i(u)
    out = fps.locked_derivative_at_fixed_point(forms, u, iu, 1.0)
    assert np.sqrt(forms.mass(out)) < 1e-6


def test_auxiliary_relation(forms, u0):
    """Locked iterates are the plain iterates times Theta_u of the previous plain iterate."""
    tau = 1.0
    steps = 8
    locked = exact.run_auxiliary(forms, u0, u0, tau, steps)
    stop = StopCriteria(energy_tol=1e-300, residual_tol=1e-300, max_iters=steps)
    plain = exact.run(forms, u0, StepPolicy.fixed(tau), stop, retain_states=True)
    assert len(locked) == len(plain.states) == steps + 1
    for n in range(1, steps + 1):
        th = exact.fixed_point.theta(forms, plain.states[n - 1], u0, tau)
        predicted = State.from_values(forms.mesh, (th / abs(th)) * plain.states[n].values)
        assert np.sqrt(forms.mass(predicted.with_coeffs(predicted.coeffs - locked[n].coeffs))) < 1e-10


def test_phase_degenerate_reference():
    # point-reflection parity: an even state never overlaps an odd reference
    mesh = build_mesh(6.0, 6.0, 8)
    forms = forms_service.assemble_base(mesh, ModelParams(beta=0.0, omega=0.5))
    v = interpolate(mesh, gaussian_profile)
    u_ref = interpolate(mesh, lambda x, y: x * np.exp(-(x ** 2 + y ** 2) / 2.0) + 0j)
    u_ref, _ = forms.normalize(u_ref)
    service = FixedPointService(precond="direct")
    with pytest.raises(PhaseDegenerateError) as err:
        service.locked_step(forms, v, u_ref, 1.0)
    assert abs(err.value.theta) <= 1e-14
