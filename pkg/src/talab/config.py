"""Process-level settings read from the environment."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import lru_cache

from talab.errors import ConfigError

logger = logging.getLogger(__name__)

THREADS_ENV = "TALAB_THREADS"

# Defaults shared across modules.
ROPE_BASE = 10000.0
EXP_DOMAIN = 64
N_CAP = 64
EXACT_TRANSCENDENTAL_BITS = 96
REAL64_LAYERNORM_EPS = 1e-5


@dataclass(frozen=True)
class Settings:
    """Environment-derived settings.

    Attributes:
        threads: Upper bound on worker threads for parallel generation and
            trial runs. 1 disables the pool.
    """

    threads: int = 1

    def __post_init__(self) -> None:
        """Validate settings."""
        if self.threads < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1, got {self.threads}")


def settings_from_env(environ: dict[str, str] | None = None) -> Settings:
    """Build ``Settings`` from ``environ`` (defaults to ``os.environ``)."""
    env = os.environ if environ is None else environ
    raw = env.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        threads = min(4, os.cpu_count() or 1)
    else:
        try:
            threads = int(raw)
        except ValueError as error:
            raise ConfigError(f"{THREADS_ENV} is not an integer: {raw!r}") from error
    logger.debug("worker threads capped at %d", threads)
    return Settings(threads=threads)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return the process settings, read once."""
    return settings_from_env()
