from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings loaded from environment variables (prefix ``MDPREG_``)."""

    # Solvers
    SOLVER_TOLERANCE: float = 1e-10
    SOLVER_MAX_ITERATIONS: int = 100_000
    SOLVER_TIE_BREAK: str = "lowest-index"

    # Experiments
    DEFAULT_TRIALS: int = 50
    SWEEP_WORKERS: int = 1

    # App
    APP_NAME: str = "mdpreg - Bayesian regularization of empirical MDPs"
    LOG_LEVEL: str = "INFO"
    DEBUG: bool = False

    model_config = SettingsConfigDict(
        env_prefix="MDPREG_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


@lru_cache
def get_settings() -> Settings:
    return Settings()
