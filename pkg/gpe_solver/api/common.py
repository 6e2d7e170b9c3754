# ===================================
# api/common.py
# ===================================
"""Shared plumbing of the command modules: config loading, problem setup, outputs."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from gpe_solver.core.config import settings
from gpe_solver.core.exceptions import ConfigError
from gpe_solver.models.run_config import RunConfig
from gpe_solver.services.forms_service import FormSet, State, forms_service
from gpe_solver.services.linalg_service import linalg_service
from gpe_solver.services.mesh_service import PROFILES, Mesh, build_mesh, interpolate
from gpe_solver.services.solver_service import ReferenceSolution
from gpe_solver.utils.config_file import load_config_file, merge_overrides
from gpe_solver.utils.state_file import read_state

logger = logging.getLogger(__name__)


@dataclass
class Problem:
    config: RunConfig
    mesh: Mesh
    forms: FormSet
    u0: State

    @property
    def out_dir(self) -> Path:
        path = Path(self.config.outputs.directory)
        path.mkdir(parents=True, exist_ok=True)
        return path


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    """File values first, then CLI overrides keyed `section.key`."""
    sections = load_config_file(path) if path else {}
    return RunConfig.from_sections(merge_overrides(sections, overrides or {}))


def configure_services(config: RunConfig):
    linalg_service.preconditioner = config.linalg.preconditioner
    linalg_service.linear_tol = config.linalg.linear_tol
    linalg_service.eigen_tol = config.linalg.eigen_tol
    forms_service.threads = config.run.threads


def build_mesh_for(config: RunConfig) -> Mesh:
    n = config.mesh.n
    if n >= settings.PAPER_MESH_N:
        if not config.run.paper_scale:
            raise ConfigError(f"Mesh n={n} is full scale; pass --paper-scale to run it")
        logger.warning(f"Full-scale mesh n={n}: assembly and runs take minutes")
    return build_mesh(config.mesh.Lx, config.mesh.Ly, n)


def initial_state(config: RunConfig, mesh: Mesh) -> State:
    if config.initial.state_path:
        _, state = read_state(config.initial.state_path, mesh)
        return state
    profile = config.initial.profile
    if profile == "random":
        rng = np.random.default_rng(config.run.seed)

        def noisy(x, y):
            noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
            return noise * np.exp(-(x ** 2 + y ** 2) / 2.0)

        return interpolate(mesh, noisy)
    return interpolate(mesh, PROFILES[profile])


def build_problem(config: RunConfig) -> Problem:
    configure_services(config)
    mesh = build_mesh_for(config)
    forms = forms_service.assemble_base(mesh, config.model.to_params(), strict=config.model.strict)
    return Problem(config=config, mesh=mesh, forms=forms, u0=initial_state(config, mesh))


def load_reference(problem: Problem, required: bool = False) -> Optional[ReferenceSolution]:
    ref = problem.config.reference
    if ref.state_path:
        _, state = read_state(ref.state_path, problem.mesh)
        state, _ = problem.forms.normalize(state)
        energy = ref.energy if ref.energy is not None else forms_service.energy(problem.forms, state)
        return ReferenceSolution(energy=energy, state=state)
    if ref.energy is not None:
        return ReferenceSolution(energy=ref.energy)
    if required:
        raise ConfigError(
            "A reference solution is required: set reference.state_path (or --reference) "
            "to a tightly converged state file, or reference.energy"
        )
    return None


def run_metadata(problem: Problem) -> dict:
    mesh = problem.mesh
    params = problem.forms.params
    return {
        "mesh": {
            "Lx": mesh.domain_half_widths[0],
            "Ly": mesh.domain_half_widths[1],
            "n": mesh.subdivisions,
            "split": mesh.split,
            "interior_nodes": mesh.n_dofs,
        },
        "model": {
            "beta": params.beta,
            "omega": params.omega,
            "potential": str(params.potential),
            "admissible": problem.forms.admissibility_ok,
            "admissibility_margin": problem.forms.admissibility_margin,
        },
        "reference_source": "state file produced by this solver (long tight-tolerance run)",
        "seed": problem.config.run.seed,
        "threads": problem.config.run.threads,
    }
