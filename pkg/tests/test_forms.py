# ===================================
# tests/test_forms.py
# ===================================
import numpy as np
import pytest
import scipy.sparse as sp

from gpe_solver.core.exceptions import AdmissibilityError, DegenerateIterateError, DimensionError
from gpe_solver.models.model_params import ModelParams
from gpe_solver.services.forms_service import State, forms_service
from gpe_solver.services.mesh_service import build_mesh

from tests.conftest import random_state


def sym_defect(A):
    return abs(A - A.T).max()


def test_base_forms_symmetric_and_definite(forms):
    assert sym_defect(forms.S) < 1e-12
    assert sym_defect(forms.M) < 1e-14
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.standard_normal(forms.size)
        assert x @ (forms.M @ x) > 0
        assert x @ (forms.S @ x) > 0


def test_covariant_and_angular_momentum_assemblies_agree(forms):
    S_l3 = forms_service.assemble_base_l3(forms.mesh, forms.params)
    assert abs(forms.S - S_l3).max() < 1e-11 * abs(forms.S).max()


def test_nonrotating_forms_have_no_imaginary_coupling():
    mesh = build_mesh(6.0, 6.0, 8)
    forms = forms_service.assemble_base(mesh, ModelParams(beta=10.0, omega=0.0))
    # real and imaginary parts decouple
    S = forms.S.tocoo()
    assert np.all((S.row % 2) == (S.col % 2))
    # and no explicit zeros are stored for the missing coupling
    assert forms.M.nnz == 2 * forms.mass_scalar.nnz
    assert np.all(forms.S.data != 0) and np.all(forms.M.data != 0)
    assert np.all(forms.h1.data != 0)


def test_mass_of_state_and_normalize(forms, u0):
    assert forms.mass(u0) == pytest.approx(1.0)
    u = u0.with_coeffs(3.0 * u0.coeffs)
    v, norm = forms.normalize(u)
    assert norm == pytest.approx(3.0)
    assert forms.mass(v) == pytest.approx(1.0)
    assert forms_service.complex_inner(forms.M, u0, u0) == pytest.approx(1.0)


def test_normalize_zero_state(forms):
    with pytest.raises(DegenerateIterateError):
        forms.normalize(State.zeros(forms.mesh))


def test_state_dimension_checked(forms):
    with pytest.raises(DimensionError):
        State(coeffs=np.zeros(7), mesh=forms.mesh)
    other = State.zeros(build_mesh(6.0, 6.0, 8))
    with pytest.raises(DimensionError):
        forms.check(other)


def test_energy_is_gauge_invariant(forms, u0):
    e = forms_service.energy(forms, u0)
    for omega in (0.3, 1.7, np.pi):
        assert forms_service.energy(forms, forms_service.gauge(u0, omega)) == pytest.approx(e, rel=1e-13)


def gauge_matrix(n, omega):
    c, s = np.cos(omega), np.sin(omega)
    return sp.kron(sp.identity(n), sp.csr_matrix([[c, -s], [s, c]]), format="csr")


def test_base_forms_commute_with_gauge(forms, u0):
    omega = 0.8
    G = gauge_matrix(forms.mesh.n_dofs, omega)
    assert np.allclose(G @ u0.coeffs, forms_service.gauge(u0, omega).coeffs, atol=1e-14)
    for A in (forms.S, forms.M):
        assert abs(G.T @ A @ G - A).max() < 1e-13 * abs(A).max()


def test_weighted_mass_is_gauge_invariant(forms, u0):
    Mu = forms_service.assemble_weighted_mass(forms, u0)
    rotated = forms_service.assemble_weighted_mass(forms, forms_service.gauge(u0, 2.3))
    assert abs(rotated - Mu).max() < 1e-14 * abs(Mu).max()


def test_line_search_integrals_along_the_phase(forms, u0):
    c = forms_service.quartic_integrals(forms, u0, forms_service.times_i(u0))
    scale = c["xi0"]
    assert abs(c["xi1"]) < 1e-14 * scale
    assert abs(c["xi3"]) < 1e-14 * scale
    assert c["xi2"] == pytest.approx(scale, rel=1e-12)
    assert c["xi4"] == pytest.approx(scale, rel=1e-12)
    assert abs(c["eta1"]) < 1e-14
    assert c["eta2"] == pytest.approx(1.0, rel=1e-12)
    assert abs(c["zeta1"]) < 1e-13 * c["zeta0"]
    assert c["zeta2"] == pytest.approx(c["zeta0"], rel=1e-12)


def test_line_search_integrals_of_zero_direction(forms, u0):
    c = forms_service.quartic_integrals(forms, u0, State.zeros(forms.mesh))
    assert c["xi0"] == pytest.approx(forms_service.quartic(forms, u0), rel=1e-12)
    for key in ("xi1", "xi2", "xi3", "xi4", "eta1", "eta2", "zeta1", "zeta2"):
        assert c[key] == 0.0
    assert c["eta0"] == pytest.approx(1.0)


def test_weighted_mass_matches_quadrature(forms, u0):
    Mu = forms_service.assemble_weighted_mass(forms, u0)
    assert sym_defect(Mu) < 1e-14
    # (M_u u, u) = int |u|^4
    assert u0.coeffs @ (Mu @ u0.coeffs) == pytest.approx(forms_service.quartic(forms, u0), rel=1e-12)


def test_weighted_mass_update_formula(forms, u0):
    d = random_state(forms.mesh, seed=3)
    Mu = forms_service.assemble_weighted_mass(forms, u0)
    xi_ud, xi_dd = forms_service.assemble_xi_matrices(forms, u0, d)
    tau = 0.37
    direct = forms_service.assemble_weighted_mass(forms, u0.with_coeffs(u0.coeffs + tau * d.coeffs))
    updated = Mu + 2 * tau * xi_ud + tau ** 2 * xi_dd
    assert abs(direct - updated).max() < 1e-13 * abs(direct).max()


def test_hessian_extra_reproduces_weighted_mass_on_u(forms, u0):
    N = forms_service.hessian_extra(forms, u0)
    Mu = forms_service.assemble_weighted_mass(forms, u0)
    assert sym_defect(N) < 1e-14
    assert np.allclose(N @ u0.coeffs, Mu @ u0.coeffs, atol=1e-14)
    # the phase direction iu is in the kernel of N_u
    iu = forms_service.times_i(u0)
    assert np.abs(N @ iu.coeffs).max() < 1e-14


def test_coupling_matrix_action(forms, u0):
    v = random_state(forms.mesh, seed=5)
    h = random_state(forms.mesh, seed=6)
    P = forms_service.assemble_coupling(forms, u0, v)
    # (Re(u conj h) v, h) = int Re(u conj h) Re(v conj h)
    uq, vq, hq = u0.at_quadrature(), v.at_quadrature(), h.at_quadrature()
    expected = forms.mesh.element_integral((uq * np.conj(hq)).real * (vq * np.conj(hq)).real)
    assert h.coeffs @ (P @ h.coeffs) == pytest.approx(expected, rel=1e-12)


def test_admissibility_violation():
    mesh = build_mesh(6.0, 6.0, 8)
    params = ModelParams(beta=100.0, omega=2.0, potential="harmonic(1, 1)")
    with pytest.raises(AdmissibilityError) as err:
        forms_service.assemble_base(mesh, params, strict=True)
    assert err.value.margin < 0
    forms = forms_service.assemble_base(mesh, params, strict=False)
    assert not forms.admissibility_ok


def test_default_model_is_admissible(forms):
    assert forms.admissibility_ok
    assert forms.admissibility_margin >= 0


def test_h1_metric_contains_mass(forms, u0):
    assert isinstance(forms.h1, sp.csr_matrix)
    x = forms.h1_solve(forms.h1 @ u0.coeffs)
    assert np.allclose(x, u0.coeffs, atol=1e-12)
    # X - M is the plain gradient form, positive semidefinite
    gap = forms_service.h1_matrix(forms) - forms.M
    assert u0.coeffs @ (gap @ u0.coeffs) > 0


def test_threaded_assembly_matches_serial():
    mesh = build_mesh(6.0, 6.0, 40)
    params = ModelParams()
    serial = forms_service.assemble_base(mesh, params, threads=1)
    threaded = forms_service.assemble_base(mesh, params, threads=3)
    assert abs(serial.S - threaded.S).max() < 1e-13
    assert abs(serial.M - threaded.M).max() < 1e-15
