"""
Configuration module with numerical tolerances, simulation defaults and the error hierarchy.

Defaults are plain module constants; the few runtime knobs come from the environment
(optionally a .env file) so that experiment files stay free of machine-specific settings.
"""
import os
from typing import Dict, Optional, Tuple

from dotenv import load_dotenv

load_dotenv()

ARTIFACT_NAME = "covlab"
ARTIFACT_VERSION = "0.3.0"

# Geometry
GEOMETRY_EPSILON = 1e-12
MAX_EXACT_DIMENSION = 4
DEFAULT_BALL_MAX_DEPTH = 12
BALL_CELL_BUDGET = 2_000_000

# Continuum simulation
DEFAULT_MARGIN_QUANTILE = 0.999
MARGIN_CLAMP_FACTOR = 10.0
PROBES_PER_ANNULUS = 1000
DEFAULT_INNER_RADIUS = 3.0

# Lattice / Markov
GUARD_BAND_FRACTION = 0.1
GUARD_TRUNCATION_TOLERANCE = 1e-6
MAX_ENUMERATION_LENGTH = 14
PMF_TAIL_TOLERANCE = 1e-12

# Series diagnostics: fitted Gauss exponents inside the band are not classified.
GAUSS_BAND: Tuple[float, float] = (0.9, 1.1)
GAUSS_TRIM_FRACTION = 0.1
BOUNDARY_TOLERANCE = 1e-12

# Harness
DEFAULT_REPLICATES = 1000
DEFAULT_SEED = 20240601
CONFIDENCE_LEVEL = 0.95

RUNTIME_CONFIG: Dict[str, Optional[str]] = {
    "threads": os.getenv("COVLAB_THREADS", "1"),
    "log_file": os.getenv("COVLAB_LOG_FILE"),
    "log_level": os.getenv("COVLAB_LOG_LEVEL", "INFO"),
}

EXIT_CODES = {
    "ok": 0,
    "validation_error": 2,
    "runtime_error": 3,
}


def get_thread_count() -> int:
    """
    Read the parallelism cap from COVLAB_THREADS.

    Returns:
        Number of worker threads, at least 1
    """
    raw = os.getenv("COVLAB_THREADS", RUNTIME_CONFIG["threads"] or "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class CoverageLabError(Exception):
    """Base class for errors raised by the coverage laboratory."""


class SpecValidationError(CoverageLabError, ValueError):
    """A model or experiment parameter violates its invariants."""

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"{field}: {message}")


class GeometryError(CoverageLabError, ValueError):
    """Shapes and targets disagree on dimension or are malformed."""
