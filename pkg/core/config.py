"""
Configuration management for EBCO.
"""

import os
from pathlib import Path
from typing import List, Tuple
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _env_int(key: str, default: int) -> int:
    """Read an integer environment variable, falling back on bad input."""
    try:
        return int(os.getenv(key, str(default)))
    except ValueError:
        return default


class Config:
    """Application configuration."""

    SPEC_VERSION = "1.0"

    # Output settings
    OUTPUT_DIR = Path(os.getenv("EBCO_OUTPUT_DIR", "output"))
    LOG_LEVEL = os.getenv("EBCO_LOG_LEVEL", "INFO")

    # Parallelism (joblib worker threads)
    N_JOBS = _env_int("EBCO_N_JOBS", 1)

    # Model settings
    HIDDEN_SIZE = 30
    EPOCHS = 2000
    LEARNING_RATE = 0.1

    # Dataset settings
    GRID_SIZE = 5

    # Attribution settings
    REFERENCE_SIZE = 100
    EXACT_LIMIT = _env_int("EBCO_EXACT_LIMIT", 12)
    EXACT_LIMIT_MAX = 20
    PERMUTATIONS = 500
    RESCALE_EPSILON = 1e-7

    # Search settings
    DELTA = 0.01
    OMEGA = 0.9
    RHO = 0.5
    ZETA = 5
    ORACLE_LIMIT = 100_000
    VARIANCE_FLOOR = 1e-12

    # Comparison harness
    COMPARE_ROUNDS = 20
    REACH_TOLERANCE = 0.05

    @classmethod
    def validate_config(cls) -> Tuple[bool, List[str]]:
        """Validate configuration and return issues."""
        issues = []

        if cls.N_JOBS == 0 or cls.N_JOBS < -1:
            issues.append("EBCO_N_JOBS must be positive or -1 (all cores)")

        if not 1 <= cls.EXACT_LIMIT <= cls.EXACT_LIMIT_MAX:
            issues.append(f"EBCO_EXACT_LIMIT must lie in [1, {cls.EXACT_LIMIT_MAX}]")

        if cls.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            issues.append(f"Unknown log level: {cls.LOG_LEVEL}")

        return len(issues) == 0, issues

    @classmethod
    def reload_config(cls):
        """Reload configuration from environment."""
        load_dotenv(override=True)
        cls.OUTPUT_DIR = Path(os.getenv("EBCO_OUTPUT_DIR", "output"))
        cls.LOG_LEVEL = os.getenv("EBCO_LOG_LEVEL", "INFO")
        cls.N_JOBS = _env_int("EBCO_N_JOBS", 1)
        cls.EXACT_LIMIT = _env_int("EBCO_EXACT_LIMIT", 12)
