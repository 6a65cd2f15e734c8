"""
Configuration management for the epimodulation toolkit.
Loads settings from environment variables (and an optional .env file) and provides defaults.
"""

import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

from .errors import ConfigError


def _default_threads() -> int:
    return max(os.cpu_count() or 1, 1)


def _int_env(key: str, default: int) -> int:
    raw = os.getenv(key, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got '{raw}'") from None


@dataclass
class AppConfig:
    """Process-wide settings shared by every subcommand."""
    threads: int = 1
    log_dir: str = "logs"  # empty = console logging only
    debug_mode: bool = False
    seed: int = 0

    @classmethod
    def from_env(cls) -> "AppConfig":
        return cls(
            threads=_int_env("EPIMOD_THREADS", _default_threads()),
            log_dir=os.getenv("EPIMOD_LOG_DIR", "logs"),
            debug_mode=os.getenv("EPIMOD_DEBUG", "false").lower() == "true",
            seed=_int_env("EPIMOD_SEED", 0),
        )

    def validate(self) -> list[str]:
        """Validate configuration and return list of errors."""
        errors = []

        if self.threads < 1:
            errors.append(f"EPIMOD_THREADS must be >= 1, got {self.threads}")
        if self.seed < 0:
            errors.append(f"EPIMOD_SEED must be >= 0, got {self.seed}")

        return errors


def load_config() -> AppConfig:
    """Load configuration from environment variables."""
    # Variables already set in the environment win over the .env file
    env_file = Path(__file__).parent.parent / ".env"
    if env_file.exists():
        load_dotenv(env_file, override=False)

    return AppConfig.from_env()
