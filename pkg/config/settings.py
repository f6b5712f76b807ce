"""
Application configuration and settings.
Uses Pydantic for validation and environment variable management.
"""

from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    """Toolkit settings loaded from environment variables."""

    # Application
    APP_NAME: str = "Bi-Poisson Process Toolkit"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False

    # Numerical tolerances
    SUPPORT_TOL: float = 1e-12  # slack on 1 + eta*x >= 0
    ATOM_WEIGHT_TOL: float = 1e-12  # atoms lighter than this are dropped
    DEGENERATE_TOL: float = 1e-14  # float Jacobi coefficient treated as zero
    BRANCH_TOL: float = 1e-14  # discriminant treated as zero on the real axis
    MASS_TOL: float = 1e-8  # total mass of a constructed measure
    FLOAT_IDENTITY_TOL: float = 1e-8  # nested-quadrature identities
    SINGLE_INTEGRAL_TOL: float = 1e-12  # single-integral identities
    CONDITIONAL_MOMENT_TOL: float = 1e-9  # conditional moment fits
    QUADRATURE_MIN_NODES: int = 12  # floor on Gauss nodes per nesting level
    MAX_JACOBI_NODES: int = 64  # largest truncated Jacobi matrix
    HARNESS_QUADRATURE_ORDER: int = 6  # n, m range of the nested-quadrature harness check

    # Sampling
    SAMPLER_CDF_TOL: float = 1e-9  # CDF table refinement target
    SAMPLER_MIN_GRID: int = 257
    SAMPLER_MAX_GRID: int = 65537
    PATH_GRID_POINTS: int = 2049  # starting angle grid for kernel batches
    PATH_GRID_MAX_POINTS: int = 8193  # refinement cap; one table row per start point
    PATH_BATCH_SIZE: int = 2048  # start points per vectorized kernel batch

    # CLI defaults
    DENSITY_SAMPLES: int = 512
    DEFAULT_ORDER: int = 10
    DEFAULT_DEG: int = 8
    DEFAULT_SEED: int = 0
    SUPPORT_PLOT_POINTS: int = 64
    MAX_CONCURRENT_VERIFICATION: int = 1  # verify --parallel default

    # Logging
    LOG_LEVEL: str = "WARNING"
    LOG_FILE: Optional[str] = None  # e.g. "logs/bipoisson.log"
    LOG_ROTATION: str = "100 MB"
    LOG_RETENTION: str = "30 days"

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True
        extra = "ignore"  # Ignore extra fields from .env


# Global settings instance
settings = Settings()
