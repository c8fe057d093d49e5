from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from sbdp_plus.logging import configure_logging, get_logger_loguru

logger = get_logger_loguru(__name__)

LOG_LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseSettings):
    """
    Process-wide numerical and I/O defaults, overridable through ``SBDP_*``
    environment variables or a ``.env`` file next to this module.
    """

    model_config: SettingsConfigDict = SettingsConfigDict(
        env_file=Path(__file__).parent / ".env",
        env_file_encoding="utf-8",
        env_prefix="SBDP_",
        extra="ignore",
    )

    # --- Local solver ---
    LOCAL_TOL: float = Field(
        default=1e-10, description="KKT tolerance of the local interior-point solves."
    )
    LOCAL_MAX_ITER: int = Field(
        default=100, description="Newton iteration cap of the interior-point method."
    )
    ACTIVE_SET_TAU: float = Field(
        default=1e-6, description="Threshold separating active from inactive inequalities."
    )
    FD_STEP: float = Field(
        default=1e-6,
        description="Relative step of the finite-difference derivative fallback, scaled by (1+|x|); second derivatives use its square root.",
    )

    # --- Analysis ---
    DEFAULT_BETA: float = Field(
        default=1.0, description="Dual step size used when the tuning formula is undefined."
    )
    LYAPUNOV_MAX_DIM: int = Field(
        default=400, description="Largest p accepted by the vectorized Lyapunov solve."
    )
    GAMMA_SEARCH_MAX: float = Field(
        default=1e4, description="Upper end of the bisection interval for the SOSC penalty."
    )
    GAMMA_SEARCH_TOL: float = Field(
        default=1e-3, description="Bisection tolerance for the SOSC penalty."
    )

    # --- Engine ---
    DIVERGENCE_THRESHOLD: float = Field(
        default=1e8, description="Runs stop as diverged once max|p| exceeds this value."
    )
    MU_WARNING_LEVEL: float = Field(
        default=-0.1, description="Warn when an inequality multiplier drops below this value."
    )
    MAX_WORKERS: int = Field(
        default=1, description="Thread workers for per-agent work inside an iteration."
    )
    HEARTBEAT_EVERY: int = Field(
        default=25, description="Iterations between two progress log lines."
    )

    # --- I/O ---
    OUTPUT_DIR: str = Field(default="output", description="Directory for traces and certificates.")
    LOG_DIR: str = Field(default="log", description="Directory for log files.")
    LOG_LEVEL: str = Field(default="INFO", description="Console log level.")

    @field_validator("LOCAL_TOL", "ACTIVE_SET_TAU", "FD_STEP", "GAMMA_SEARCH_TOL", "DEFAULT_BETA")
    @classmethod
    def check_positive(cls, value: float, info) -> float:
        if not value > 0:
            logger.error(f"{info.field_name} must be positive, got {value}")
            raise ValueError(f"{info.field_name} must be positive")
        return value

    @field_validator("LOCAL_MAX_ITER", "LYAPUNOV_MAX_DIM", "MAX_WORKERS", "HEARTBEAT_EVERY")
    @classmethod
    def check_count(cls, value: int, info) -> int:
        if value < 1:
            logger.error(f"{info.field_name} must be at least 1, got {value}")
            raise ValueError(f"{info.field_name} must be at least 1")
        return value

    @field_validator("LOG_LEVEL")
    @classmethod
    def check_level(cls, value: str) -> str:
        if value.upper() not in LOG_LEVELS:
            logger.error(f"LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {value}")
            raise ValueError(f"unknown log level {value}")
        return value.upper()


try:
    settings = Settings()
except Exception as e:
    logger.error(f"Error loading settings: {e}")
    raise SystemExit(e)

configure_logging(settings.LOG_DIR, settings.LOG_LEVEL)
