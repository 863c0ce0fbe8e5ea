"""Environment-driven settings for the workbench.

Values are read from the process environment (optionally populated from a
`.env` file) each time they are requested, so tests can patch the
environment freely.
"""

import logging
import os
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

DEFAULT_LOG_LEVEL = "INFO"


def env_seed() -> Optional[int]:
    """Seed override from GW_SEED, if set.

    Returns:
        Integer seed or None when the variable is unset or empty
    """
    raw = os.getenv("GW_SEED", "").strip()
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"GW_SEED must be an integer, got {raw!r}")


def resolve_seed(flag_seed: int) -> int:
    """Apply the GW_SEED override to a seed given on the command line."""
    override = env_seed()
    return flag_seed if override is None else override


def default_jobs() -> int:
    """Worker count for dataset generation (GW_JOBS or available CPUs)."""
    raw = os.getenv("GW_JOBS", "").strip()
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def log_level() -> int:
    """Logging level from GW_LOG_LEVEL."""
    name = os.getenv("GW_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper()
    return getattr(logging, name, logging.INFO)


def run_slow_tests() -> bool:
    """Whether desk-scale acceptance tests are enabled."""
    return os.getenv("GW_RUN_SLOW", "") == "1"
