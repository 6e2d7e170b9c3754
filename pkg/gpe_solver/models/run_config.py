# ===================================
# models/run_config.py
# ===================================
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from gpe_solver.core.config import settings
from gpe_solver.core.exceptions import ConfigError
from gpe_solver.models.model_params import ModelParams, PotentialSpec
from gpe_solver.models.solver import StepPolicy, StopCriteria


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MeshConfig(_Section):
    Lx: float = Field(6.0, gt=0)
    Ly: float = Field(6.0, gt=0)
    n: int = Field(settings.DEFAULT_MESH_N, ge=2)


class ModelConfig(_Section):
    beta: float = Field(100.0, ge=0)
    omega: float = 1.2
    potential: str = "harmonic(0.9, 1.2)"
    K: Optional[float] = Field(None, gt=0)
    strict: bool = False

    @field_validator("potential")
    @classmethod
    def check_potential(cls, v: str) -> str:
        PotentialSpec.parse(v)
        return v

    def to_params(self) -> ModelParams:
        return ModelParams(beta=self.beta, omega=self.omega, potential=self.potential, trap_margin_K=self.K)


class InitialConfig(_Section):
    profile: Literal["vortex", "gaussian", "random"] = "vortex"
    state_path: Optional[str] = None


class PolicyConfig(_Section):
    mode: Literal["fixed", "adaptive"] = "adaptive"
    tau: Optional[float] = None
    bracket_lo: float = settings.LINE_SEARCH_BRACKET[0]
    bracket_hi: float = settings.LINE_SEARCH_BRACKET[1]
    scalar_min_tol: float = Field(settings.LINE_SEARCH_TOL, gt=0)
    metric: Literal["adaptive", "h1"] = "adaptive"

    def to_step_policy(self) -> StepPolicy:
        return StepPolicy(
            mode=self.mode,
            tau=self.tau,
            bracket=(self.bracket_lo, self.bracket_hi),
            scalar_min_tol=self.scalar_min_tol,
        )


class ReferenceConfig(_Section):
    state_path: Optional[str] = None
    energy: Optional[float] = None


class OutputConfig(_Section):
    directory: str = settings.OUTPUT_DIR
    retain_states: bool = False
    emit_rates: bool = False
    emit_spectral: bool = False
    svg: bool = False


class LinalgConfig(_Section):
    preconditioner: Literal["jacobi", "ilu", "direct"] = settings.PRECONDITIONER
    linear_tol: float = Field(settings.LINEAR_TOL, gt=0, le=1e-6)
    eigen_tol: float = Field(settings.EIGEN_TOL, gt=0)


class CheckConfig(_Section):
    steps: int = Field(20, ge=1)
    aux_steps: int = Field(20, ge=1)


class SpectralConfig(_Section):
    k_a: int = Field(25, ge=1)
    k_h: int = Field(6, ge=2)
    k_mu: int = Field(5, ge=1)


class RunSection(_Section):
    seed: int = 0
    threads: int = Field(settings.THREADS, ge=1)
    paper_scale: bool = False


class RunConfig(BaseModel):
    """One experiment: the flat file's sections map one-to-one onto these fields."""

    mesh: MeshConfig = Field(default_factory=MeshConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    initial: InitialConfig = Field(default_factory=InitialConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    stop: StopCriteria = Field(default_factory=StopCriteria)
    reference: ReferenceConfig = Field(default_factory=ReferenceConfig)
    outputs: OutputConfig = Field(default_factory=OutputConfig)
    linalg: LinalgConfig = Field(default_factory=LinalgConfig)
    check: CheckConfig = Field(default_factory=CheckConfig)
    spectral: SpectralConfig = Field(default_factory=SpectralConfig)
    run: RunSection = Field(default_factory=RunSection)

    @classmethod
    def from_sections(cls, sections: Dict[str, Dict[str, Any]]) -> "RunConfig":
        unknown = set(sections) - set(cls.model_fields)
        if unknown:
            raise ConfigError(f"Unknown config section(s): {', '.join(sorted(unknown))}")
        try:
            config = cls.model_validate(sections)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(f"Invalid run configuration: {problems}")
        # validates tau and the bracket early, before any assembly
        config.policy.to_step_policy()
        return config

    @property
    def step_policy(self) -> StepPolicy:
        return self.policy.to_step_policy()
