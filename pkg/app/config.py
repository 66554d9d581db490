# app/config.py
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit defaults loaded from environment variables (prefix REFRACTOR_)."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="REFRACTOR_",
        case_sensitive=False,
        extra="ignore",
    )

    # Tolerances (relative ones are scaled by 1 + 2a)
    membership_tol: float = Field(1e-9, gt=0)
    singular_tol: float = Field(1e-8, gt=0)
    flat_curvature: float = Field(1e-9, gt=0)
    grazing_tol: float = Field(1e-12, gt=0)

    # Sampling
    wavefront_samples: int = Field(512, ge=16)
    oval_resolution: int = Field(360, ge=16)
    phi_resolution: int = Field(720, ge=16)
    singular_margin: int = Field(3, ge=0)

    # Validation thresholds
    deviation_threshold: float = Field(1e-6, gt=0)
    path_threshold: float = Field(1e-8, gt=0)
    hausdorff_threshold: float = Field(1e-6, gt=0)

    # Runtime
    workers: int = Field(1, ge=1)
    output_dir: str = "out"
    log_level: str = "INFO"


@lru_cache()
def get_settings() -> Settings:
    return Settings()
