# ===================================
# tests/test_acceptance.py
# ===================================
"""Desk-scale and full-scale acceptance runs; all marked slow (pytest -m slow)."""
import numpy as np
import pytest

from gpe_solver.core.exceptions import PolicyError
from gpe_solver.models.model_params import ModelParams
from gpe_solver.models.solver import StepPolicy, StopCriteria
from gpe_solver.services.check_service import check_service
from gpe_solver.services.fixed_point_service import FixedPointService
from gpe_solver.services.forms_service import State, forms_service
from gpe_solver.services.linalg_service import linalg_service
from gpe_solver.services.mesh_service import build_mesh, interpolate, vortex_profile
from gpe_solver.services.solver_service import ReferenceSolution, solver_service
from gpe_solver.services.spectral_service import spectral_service

from tests.conftest import random_state

pytestmark = pytest.mark.slow

NEVER = dict(energy_tol=1e-300, residual_tol=1e-300)


def reference_setup(n):
    forms = forms_service.assemble_base(build_mesh(6.0, 6.0, n), ModelParams())
    u0, _ = forms.normalize(interpolate(forms.mesh, vortex_profile))
    return forms, u0


@pytest.fixture(scope="module")
def setup32():
    return reference_setup(32)


@pytest.fixture(scope="module")
def converged64():
    forms, u0 = reference_setup(64)
    trace = solver_service.run(
        forms, u0, StepPolicy.adaptive(), StopCriteria(energy_tol=1e-14, residual_tol=1e-9, max_iters=20000)
    )
    assert trace.stop_reason == "tol_reached"
    return forms, u0, trace


# ===================================
# exact identities, gauge and auxiliary relation
# ===================================

@pytest.mark.parametrize("policy", [StepPolicy.adaptive(), StepPolicy.fixed(1.0)])
def test_identity_suite(setup32, policy):
    forms, u0 = setup32
    trace = solver_service.run(forms, u0, policy, StopCriteria(max_iters=30, **NEVER))
    scale = max(1.0, abs(trace.initial_energy))
    for r in trace.records:
        assert r.energy_identity_gap <= 1e-11 * scale
        assert r.tangency <= 1e-10
        assert abs(r.mass_after - 1.0) <= 1e-12
        assert r.pythagoras_gap <= 1e-12
    assert check_service.line_search_check(forms, u0).passed


def test_gauge_and_auxiliary_suite(setup32):
    forms, u0 = setup32
    gauge = check_service.gauge_check(forms, u0, StepPolicy.fixed(1.0), 50, omega=2.1)
    assert gauge.passed, gauge.defect
    auxiliary = check_service.auxiliary_check(forms, u0, 1.0, 50)
    assert auxiliary.passed, auxiliary.defect


def test_step_identity_near_the_step_limit(setup32):
    forms, u0 = setup32
    trace = solver_service.run(forms, u0, StepPolicy.fixed(1.95), StopCriteria(max_iters=100, **NEVER))
    # the energy need not decrease monotonically this close to 2, but the step identity is exact
    assert trace.stop_reason == "max_iters"
    assert trace.iterations == 100
    for record in trace.records:
        assert record.energy_identity_gap <= 1e-11 * max(1.0, abs(record.energy_before))
        assert record.mass_identity_gap < 1e-10
    with pytest.raises(PolicyError):
        StepPolicy.fixed(2.2)


# ===================================
# linear oracle
# ===================================

def laplace_forms(n):
    mesh = build_mesh(np.pi / 2, np.pi / 2, n)
    return forms_service.assemble_base(mesh, ModelParams(beta=0.0, omega=0.0, potential="harmonic(0, 0)"))


def test_linear_oracle_eigenvalue_converges_at_second_order():
    errors = []
    stop = StopCriteria(energy_tol=1e-15, residual_tol=1e-10, max_iters=5000)
    for n in (16, 32, 64):
        forms = laplace_forms(n)
        trace = solver_service.run(forms, random_state(forms.mesh, 1), StepPolicy.adaptive(), stop)
        errors.append(abs(trace.final_lambda - 2.0))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders >= 1.9), orders


def test_linear_oracle_unit_step_rate():
    forms = laplace_forms(16)
    values = [p.value for p in linalg_service.dense_oracle(forms.S, forms.M, 4)]
    ratio = values[0] / values[2]
    pair = linalg_service.dense_oracle(forms.S, forms.M, 1)[0]
    ground, _ = forms.normalize(State(coeffs=pair.vector, mesh=forms.mesh))
    trace = solver_service.run(
        forms, random_state(forms.mesh, 2), StepPolicy.fixed(1.0), StopCriteria(max_iters=40, **NEVER),
        retain_states=True,
    )
    samples = [s for s in solver_service.contraction_rates(forms, trace, ground) if s.h1_error > 1e-8]
    assert abs(samples[-1].rate - ratio) <= 0.005


# ===================================
# derivative formulas
# ===================================

def test_finite_differences_converge_at_second_order():
    forms, u = reference_setup(24)
    fps = FixedPointService(precond="direct")
    h = random_state(forms.mesh, 3)
    h = h.with_coeffs(h.coeffs / np.sqrt(forms.mass(h)))
    u_ref = random_state(forms.mesh, 4)
    tau = 1.0

    maps = {
        "psi": (lambda v: fps.psi(forms, v).coeffs, fps.psi_prime(forms, u, h).coeffs),
        "psi_tau": (lambda v: fps.psi_tau(forms, v, tau).coeffs, fps.psi_tau_prime(forms, u, h, tau).coeffs),
        "theta": (
            lambda v: np.array([fps.theta(forms, v, u_ref, tau)]),
            np.array([fps.theta_prime(forms, u, u_ref, h, tau)]),
        ),
    }
    for name, (fn, analytic) in maps.items():
        gaps = []
        for eps in (1e-3, 5e-4, 2.5e-4):
            fd = (fn(u.with_coeffs(u.coeffs + eps * h.coeffs)) - fn(u.with_coeffs(u.coeffs - eps * h.coeffs))) / (2 * eps)
            gaps.append(np.linalg.norm(fd - analytic))
        ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
        assert np.all((ratios >= 3.7) & (ratios <= 4.3)), (name, ratios)


# ===================================
# spectral structure and rates on a converged state
# ===================================

def test_spectral_structure(converged64):
    forms, _, trace = converged64
    u = trace.final_state
    report = spectral_service.spectral_report(forms, u, k_a=25, k_h=4, k_mu=3)
    assert report.lambda1 == pytest.approx(report.lam, rel=1e-7)
    assert report.iu_alignment >= 1.0 - 1e-7
    assert report.lambda_index_in_a_u is None or report.lambda_index_in_a_u > 1
    for name in ("mu_upper", "mu_lower", "coercivity"):
        assert report.bound_checks[name], name


def test_rate_prediction(converged64):
    forms, u0, trace = converged64
    u_ref = trace.final_state
    lam = trace.final_lambda
    mu1 = abs(spectral_service.weighted_evp(forms, u_ref, lam, k=1).mu[0])
    hess = spectral_service.hessian_spectrum(forms, u_ref, k=2)
    ratio = hess.pairs[0].value / hess.pairs[1].value

    run = solver_service.run(forms, u0, StepPolicy.fixed(1.0), StopCriteria(max_iters=800, **NEVER), retain_states=True)
    rates = [s.rate for s in solver_service.contraction_rates(forms, run, u_ref) if s.h1_error > 1e-7]
    tail = float(np.mean(rates[-len(rates) // 5:]))
    assert tail <= mu1 + 0.002
    assert tail <= ratio + 0.002


# ===================================
# full scale (n = 256)
# ===================================

@pytest.fixture(scope="module")
def full_scale_reference():
    forms, u0 = reference_setup(256)
    trace = solver_service.run(
        forms, u0, StepPolicy.adaptive(), StopCriteria(energy_tol=1e-15, residual_tol=1e-11, max_iters=40000)
    )
    return forms, u0, trace


def iterations_to(forms, u0, reference, policy, metric="adaptive"):
    trace = solver_service.run(
        forms, u0, policy, StopCriteria(energy_tol=1e-9, max_iters=20000), reference=reference, metric=metric
    )
    assert trace.stop_reason == "tol_reached"
    return trace.iterations


def test_full_scale_reproduction(full_scale_reference):
    forms, u0, trace = full_scale_reference
    u = trace.final_state
    assert forms_service.energy(forms, u) == pytest.approx(1.64547132, abs=5e-4)
    assert trace.final_lambda == pytest.approx(4.451867515, abs=5e-3)
    index = spectral_service.a_u_spectrum(forms, u, k=25, lam=trace.final_lambda).lambda_index
    assert index is not None and 14 <= index <= 20

    reference = ReferenceSolution(energy=forms_service.energy(forms, u), state=u)
    adaptive = iterations_to(forms, u0, reference, StepPolicy.adaptive())
    unit = iterations_to(forms, u0, reference, StepPolicy.fixed(1.0))
    assert adaptive / unit == pytest.approx(1292 / 1958, rel=0.15)
    h1 = iterations_to(forms, u0, reference, StepPolicy.adaptive(), metric="h1")
    assert h1 >= 3 * adaptive
