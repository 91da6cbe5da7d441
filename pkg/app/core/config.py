"""
Configuration settings for homgeo using Pydantic BaseSettings
"""
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Application settings
    APP_NAME: str = "homgeo - homogeneous geodesic toolkit"
    VERSION: str = "1.0.0"
    LOG_LEVEL: str = "WARNING"
    LOG_FILE: Optional[Path] = None

    # Linear algebra tolerances
    JACOBI_TOL: float = 1e-12
    JACOBI_MAX_SWEEPS: int = 100
    RANK_TOL: float = 1e-9
    LIE_TOL: float = 1e-10

    # Geodesic criteria and search
    GEODESIC_TOL: float = 1e-9
    DEDUP_ANGLE: float = 1e-4
    SEARCH_SAMPLES: int = 20000
    SEARCH_SEED: int = 0
    NEWTON_MAX_ITER: int = 50
    NEWTON_HALVINGS: int = 30
    NEWTON_STEP: float = 1e-7
    NEWTON_TOL: float = 1e-11
    MANIFOLD_FRACTION: float = 0.05
    MANIFOLD_MIN_AXES: int = 10
    KROPINA_DOMAIN_MARGIN: float = 1e-7
    MAX_SEARCH_DIM: int = 6

    # Finsler metric numerics
    HESSIAN_STEP: float = 1e-5
    REGULARITY_GRID: int = 2001

    # Existence construction
    EIGEN_ZERO_TOL: float = 1e-8
    BISECTION_MAX_ITER: int = 200
    BISECTION_TOL: float = 1e-12
    POLE_MARGIN: float = 1e-6
    CERTIFICATE_TOL: float = 1e-9

    # 3D classification
    MILNOR_TOL: float = 1e-12
    RICCI_GAP: float = 1e-8

    # Workers
    WORKERS: int = 4
    CHUNK_SIZE: int = 2048

    # Report formatting
    FLOAT_DIGITS: int = 17

    model_config = SettingsConfigDict(
        env_prefix="HOMGEO_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )


settings = Settings()
