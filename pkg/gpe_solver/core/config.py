# ===================================
# core/config.py
# ===================================
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Literal, Tuple
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent


class Settings(BaseSettings):
    # App Settings
    APP_NAME: str = "Gross-Pitaevskii Ground State Solver"
    LOG_LEVEL: str = "INFO"
    LOG_EVERY: int = 50

    # Linear solves
    LINEAR_TOL: float = 1e-12
    LINEAR_MAX_ITERS: int = 20000
    PRECONDITIONER: Literal["jacobi", "ilu", "direct"] = "jacobi"

    # Eigensolves
    EIGEN_TOL: float = 1e-9
    EIGEN_MAX_ITERS: int = 5000

    # Meshes
    DEFAULT_MESH_N: int = 128
    PAPER_MESH_N: int = 256

    # Iteration
    M_U_REFRESH_INTERVAL: int = 500
    DIVERGENCE_STREAK: int = 10
    LINE_SEARCH_BRACKET: Tuple[float, float] = (1e-3, 2.0 - 1e-3)
    LINE_SEARCH_TOL: float = 1e-10

    # Model checks
    ADMISSIBILITY_K: float = 0.01
    SPECTRUM_RESIDUAL_GATE: float = 1e-6

    # Outputs and parallelism
    OUTPUT_DIR: str = "runs"
    THREADS: int = 1

    model_config = SettingsConfigDict(
        env_prefix="GPE_",
        env_file=BASE_DIR / ".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()
