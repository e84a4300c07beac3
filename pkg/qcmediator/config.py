"""
qcmediator Configuration Management

Environment-based configuration with validation and type checking.
Loads from .env file and environment variables.
"""

import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from dotenv import load_dotenv


PACKAGE_DIR = Path(__file__).resolve().parent
ENV_PREFIX = "QCMEDIATOR_"


class LogLevel(str, Enum):
    """Logging level options."""
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"


@dataclass
class QCMediatorConfig:
    """
    Global qcmediator configuration.

    All values come from environment variables with sensible defaults.
    Physical parameters of individual scenarios live in the preset files,
    not here.
    """

    # Physics
    hbar: float = 1.0

    # Capacity: largest Hilbert-space dimension a tensor product may reach
    max_total_dim: int = 2 ** 20

    # Output
    out_dir: str = "./results"
    preset_dir: str = str(PACKAGE_DIR / "presets")

    # Reproducibility & execution
    default_seed: int = 20190513
    jobs: int = 1

    # Observability
    log_level: LogLevel = LogLevel.INFO
    structured_logs: bool = True

    @classmethod
    def from_env(cls) -> "QCMediatorConfig":
        """
        Load configuration from environment variables.

        Environment variable names:
        - QCMEDIATOR_HBAR
        - QCMEDIATOR_MAX_TOTAL_DIM
        - QCMEDIATOR_OUT_DIR
        - QCMEDIATOR_PRESET_DIR
        - QCMEDIATOR_DEFAULT_SEED
        - QCMEDIATOR_JOBS
        - QCMEDIATOR_LOG_LEVEL
        - QCMEDIATOR_STRUCTURED_LOGS
        """
        load_dotenv()

        def get_int(key: str, default: int) -> int:
            try:
                return int(os.getenv(f"{ENV_PREFIX}{key}", default))
            except ValueError:
                return default

        def get_float(key: str, default: float) -> float:
            try:
                return float(os.getenv(f"{ENV_PREFIX}{key}", default))
            except ValueError:
                return default

        def get_bool(key: str, default: bool) -> bool:
            value = os.getenv(f"{ENV_PREFIX}{key}", str(default)).lower()
            return value in ("true", "1", "yes", "on")

        def get_str(key: str, default: str) -> str:
            return os.getenv(f"{ENV_PREFIX}{key}", default)

        def get_enum(key: str, enum_cls, default):
            value = get_str(key, default.value)
            try:
                return enum_cls(value.upper())
            except ValueError:
                return default

        return cls(
            hbar=get_float("HBAR", 1.0),
            max_total_dim=get_int("MAX_TOTAL_DIM", 2 ** 20),
            out_dir=get_str("OUT_DIR", "./results"),
            preset_dir=get_str("PRESET_DIR", str(PACKAGE_DIR / "presets")),
            default_seed=get_int("DEFAULT_SEED", 20190513),
            jobs=get_int("JOBS", 1),
            log_level=get_enum("LOG_LEVEL", LogLevel, LogLevel.INFO),
            structured_logs=get_bool("STRUCTURED_LOGS", True),
        )

    def validate(self) -> bool:
        """
        Validate configuration values.

        Returns:
            True if valid, raises ValueError if invalid
        """
        if not self.hbar > 0:
            raise ValueError(f"Invalid hbar: {self.hbar}")

        if self.max_total_dim < 2:
            raise ValueError(f"max_total_dim too small: {self.max_total_dim}")

        if self.jobs < 1:
            raise ValueError(f"Invalid jobs: {self.jobs}")

        if not 0 <= self.default_seed < 2 ** 64:
            raise ValueError(f"default_seed must fit in 64 bits: {self.default_seed}")

        if not Path(self.preset_dir).is_dir():
            raise ValueError(f"preset_dir does not exist: {self.preset_dir}")

        return True

    def to_dict(self) -> dict:
        """Convert configuration to dictionary."""
        return {
            "hbar": self.hbar,
            "max_total_dim": self.max_total_dim,
            "out_dir": self.out_dir,
            "preset_dir": self.preset_dir,
            "default_seed": self.default_seed,
            "jobs": self.jobs,
            "log_level": self.log_level.value,
            "structured_logs": self.structured_logs,
        }

    def __str__(self) -> str:
        """Pretty print configuration."""
        lines = ["qcmediator Configuration:"]
        for key, value in self.to_dict().items():
            lines.append(f"  {key}: {value}")
        return "\n".join(lines)


# Load default configuration
DEFAULT_CONFIG = QCMediatorConfig.from_env()


def resolve_hbar(hbar=None) -> float:
    """Return an explicit ħ, or the configured one."""
    return DEFAULT_CONFIG.hbar if hbar is None else float(hbar)
