# ===================================
# tests/conftest.py
# ===================================
import numpy as np
import pytest

from gpe_solver.models.model_params import ModelParams
from gpe_solver.models.solver import StepPolicy, StopCriteria
from gpe_solver.services.forms_service import forms_service
from gpe_solver.services.mesh_service import build_mesh, gaussian_profile, interpolate, vortex_profile
from gpe_solver.services.solver_service import solver_service


def random_state(mesh, seed=0):
    rng = np.random.default_rng(seed)

    def noisy(x, y):
        noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
        return noise * np.exp(-(x ** 2 + y ** 2) / 2.0)

    return interpolate(mesh, noisy)


GROUND_STATE_PARAMS = ModelParams(beta=50.0, omega=0.8)


@pytest.fixture
def params():
    return ModelParams(beta=100.0, omega=1.2, potential="harmonic(0.9, 1.2)")


@pytest.fixture
def small_mesh():
    return build_mesh(6.0, 6.0, 8)


@pytest.fixture
def forms(params):
    return forms_service.assemble_base(build_mesh(6.0, 6.0, 12), params)


@pytest.fixture
def u0(forms):
    u, _ = forms.normalize(interpolate(forms.mesh, vortex_profile))
    return u


@pytest.fixture(scope="session")
def ground_state():
    """Tightly converged ground state on a 16 x 16 mesh with moderate rotation."""
    mesh = build_mesh(6.0, 6.0, 16)
    forms = forms_service.assemble_base(mesh, GROUND_STATE_PARAMS)
    # from the vortex profile this setup settles on a saddle point instead
    u0 = interpolate(mesh, gaussian_profile)
    stop = StopCriteria(energy_tol=1e-13, residual_tol=1e-9, max_iters=6000)
    trace = solver_service.run(forms, u0, StepPolicy.adaptive(), stop)
    return forms, trace.final_state, trace


@pytest.fixture(scope="session")
def nonrotating_ground_state():
    mesh = build_mesh(6.0, 6.0, 16)
    forms = forms_service.assemble_base(mesh, ModelParams(beta=10.0, omega=0.0))
    u0 = interpolate(mesh, lambda x, y: np.exp(-(x ** 2 + y ** 2) / 2.0) + 0j)
    stop = StopCriteria(energy_tol=1e-13, residual_tol=1e-9, max_iters=3000)
    trace = solver_service.run(forms, u0, StepPolicy.adaptive(), stop)
    return forms, trace.final_state, trace
