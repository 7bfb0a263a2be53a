"""Configuration and constants for estimation, simulation and the empirical pipeline."""

import os
import re
from pathlib import Path
from typing import Dict, Optional, Union

__all__ = [
    "DEFAULT_TOLERANCE",
    "DEFAULT_MAX_OUTER_ITERATIONS",
    "DEFAULT_MAX_INNER_STEPS",
    "DEFAULT_RIDGE_FLOOR",
    "RIDGE_CEILING",
    "RIDGE_GROWTH",
    "MAX_STEP_HALVINGS",
    "INDEX_BOUNDS",
    "DEFAULT_N_RESTARTS",
    "DEFAULT_SEED",
    "DEFAULT_K_MAX",
    "DEGENERACY_RTOL",
    "PROB_CLAMP",
    "DEFAULT_JUMP_LEVEL",
    "MINRV_THETA",
    "ADF_PVALUE_FLOOR",
    "ADF_PVALUE_CEILING",
    "DEFAULT_EV_WINDOW",
    "DEFAULT_COVERAGE_LEVEL",
    "FLOAT_FORMAT",
    "THREADS_ENV_VAR",
    "LOG_LEVEL_ENV_VAR",
    "resolve_threads",
    "default_log_level",
    "load_config_file",
    "normalize_key",
]

# =============================================================================
# Alternating maximum likelihood
# =============================================================================

# Stop when |L_new - L_last| <= tolerance * N * T
DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_OUTER_ITERATIONS = 500
DEFAULT_MAX_INNER_STEPS = 50

# Ridge added to Fisher blocks, relative to trace/dim
DEFAULT_RIDGE_FLOOR = 1e-8
RIDGE_CEILING = 1e-2
RIDGE_GROWTH = 10.0

MAX_STEP_HALVINGS = 40

# Line searches never push |z| past these bounds (fitted probabilities stay off 0/1)
INDEX_BOUNDS: Dict[str, float] = {
    "logit": 50.0,
    "probit": 30.0,
}

DEFAULT_N_RESTARTS = 1
DEFAULT_SEED = 0

# =============================================================================
# Rank selection and inference
# =============================================================================

DEFAULT_K_MAX = 8

# Smallest eigenvalue below DEGENERACY_RTOL * trace => pseudo-inverse
DEGENERACY_RTOL = 1e-10

# Reported probabilities live in [PROB_CLAMP, 1 - PROB_CLAMP]
PROB_CLAMP = 1e-15

DEFAULT_COVERAGE_LEVEL = 0.95

# =============================================================================
# Empirical pipeline
# =============================================================================

DEFAULT_JUMP_LEVEL = 0.95
MINRV_THETA = 1.81

ADF_PVALUE_FLOOR = 0.001
ADF_PVALUE_CEILING = 0.999

# One trading year
DEFAULT_EV_WINDOW = 252

# =============================================================================
# I/O and runtime
# =============================================================================

# 17 significant digits round-trips every double
FLOAT_FORMAT = "%.17g"

THREADS_ENV_VAR = "NSBFM_THREADS"
LOG_LEVEL_ENV_VAR = "NSBFM_LOG_LEVEL"

_LINE_PATTERN = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=\s*(.*?)\s*$")


def resolve_threads(value: Optional[Union[str, int]] = None) -> int:
    """Resolve a worker count from a flag value, the environment, or the CPU count.

    Args:
        value: Explicit count, "auto", or None to fall back to NSBFM_THREADS.

    Returns:
        Worker count, at least 1.
    """
    if value is None:
        value = os.getenv(THREADS_ENV_VAR, "auto")
    if isinstance(value, str):
        value = value.strip().lower()
        if value in ("", "auto"):
            return max(1, os.cpu_count() or 1)
        value = int(value)
    if value < 1:
        raise ValueError(f"thread count must be >= 1, got {value}")
    return int(value)


def default_log_level() -> str:
    """Log level name from NSBFM_LOG_LEVEL (default INFO)."""
    return os.getenv(LOG_LEVEL_ENV_VAR, "INFO").upper()


def normalize_key(key: str) -> str:
    """Map '--max-iter', 'max-iter' and 'max_iter' to the same option name."""
    return key.strip().lstrip("-").replace("-", "_")


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Read a plain key=value config file.

    Blank lines and lines starting with '#' are ignored; trailing '# ...' comments are
    stripped. Keys are normalized with `normalize_key`.

    Args:
        path: Config file path.

    Returns:
        Mapping of option name to raw string value.

    Raises:
        ConfigError: If a line is not of the form key=value.
        FileNotFoundError: If the file does not exist.
    """
    from nsbfm.validation import ConfigError

    values: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            match = _LINE_PATTERN.match(line)
            if match is None:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            values[normalize_key(match.group(1))] = match.group(2)
    return values
