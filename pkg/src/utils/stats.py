"""
Seeded random streams, interval estimates, replicate fan-out and the result model.
"""
import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field
from scipy import stats

from src.utils.config import ARTIFACT_VERSION, CONFIDENCE_LEVEL, SpecValidationError, get_thread_count
from src.utils.utils import config_hash

logger = logging.getLogger(__name__)

T = TypeVar("T")

SEED_MASK = (1 << 64) - 1


def split_stream(seed: int, index: int) -> np.random.Generator:
    """
    Derive the independent stream for replicate `index` of a seeded run.

    Philox is counter-based; the spawn key places each replicate on its own key
    so that streams do not depend on how replicates are scheduled.

    Args:
        seed: 64-bit experiment seed
        index: Replicate index, at least 0

    Returns:
        A numpy Generator owned by the caller
    """
    if index < 0:
        raise SpecValidationError("index", f"replicate index must be nonnegative, got {index}")
    sequence = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(sequence))


def wilson_interval(successes: int, trials: int, level: float = CONFIDENCE_LEVEL) -> Tuple[float, float]:
    """
    Wilson score interval for a binomial proportion.

    Args:
        successes: Number of successes, 0 <= successes <= trials
        trials: Number of trials, at least 1
        level: Two-sided confidence level

    Returns:
        (lo, hi) clipped to [0, 1]
    """
    if trials < 1:
        raise SpecValidationError("trials", f"must be at least 1, got {trials}")
    if not 0 <= successes <= trials:
        raise SpecValidationError("successes", f"must lie in [0, {trials}], got {successes}")
    if not 0.0 < level < 1.0:
        raise SpecValidationError("level", f"must lie in (0, 1), got {level}")

    z = float(stats.norm.ppf(0.5 + level / 2.0))
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / trials + z * z / (4.0 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


def mean_and_standard_error(values: Sequence[float]) -> Tuple[float, float]:
    """Sample mean and its standard error (0 for a single value)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def map_replicates(
    task: Callable[[int, np.random.Generator], T],
    seed: int,
    replicates: int,
    n_jobs: Optional[int] = None,
) -> List[T]:
    """
    Run `task(r, split_stream(seed, r))` for every replicate and return results in replicate order.

    Args:
        task: Callable receiving the replicate index and its private stream
        seed: Experiment seed
        replicates: Number of replicates, at least 1
        n_jobs: Worker threads; defaults to COVLAB_THREADS

    Returns:
        List of task results indexed by replicate
    """
    if replicates < 1:
        raise SpecValidationError("replicates", f"must be at least 1, got {replicates}")
    jobs = n_jobs if n_jobs is not None else get_thread_count()
    logger.debug(f"Dispatching {replicates} replicates on {jobs} thread(s)")
    if jobs == 1:
        return [task(r, split_stream(seed, r)) for r in range(replicates)]
    return Parallel(n_jobs=jobs, prefer="threads")(
        delayed(task)(r, split_stream(seed, r)) for r in range(replicates)
    )


class Provenance(BaseModel):
    """Where a result came from."""
    config_hash: str = Field(..., description="xxhash64 of the canonical configuration")
    seed: int = Field(..., description="Experiment seed")
    artifact_version: str = Field(default=ARTIFACT_VERSION, description="covlab version")

    @classmethod
    def for_payload(cls, payload: Dict[str, Any], seed: int) -> "Provenance":
        return cls(config_hash=config_hash(payload), seed=seed)


class ExperimentResult(BaseModel):
    """Replicate-level outcomes plus aggregate estimate, uncertainty and provenance."""
    kind: str = Field(..., description="Experiment kind")
    estimate: Optional[float] = Field(default=None, description="Headline estimate")
    standard_error: Optional[float] = Field(default=None, ge=0.0, description="Standard error of the estimate")
    interval: Optional[Tuple[float, float]] = Field(default=None, description="Confidence interval")
    replicates: int = Field(default=0, ge=0, description="Number of replicates aggregated")
    details: Dict[str, Any] = Field(default_factory=dict, description="Kind-specific summary values")
    rows: List[Dict[str, Any]] = Field(default_factory=list, description="Replicate or table rows")
    provenance: Provenance


def summarize_mean(
    kind: str,
    values: Sequence[float],
    provenance: Provenance,
    rows: Optional[List[Dict[str, Any]]] = None,
    details: Optional[Dict[str, Any]] = None,
) -> ExperimentResult:
    """Aggregate real-valued replicate outcomes into a mean with a normal 95% interval."""
    mean, se = mean_and_standard_error(values)
    z = float(stats.norm.ppf(0.5 + CONFIDENCE_LEVEL / 2.0))
    return ExperimentResult(
        kind=kind,
        estimate=mean,
        standard_error=se,
        interval=(mean - z * se, mean + z * se),
        replicates=len(values),
        details=details or {},
        rows=rows or [],
        provenance=provenance,
    )


def summarize_proportion(
    kind: str,
    flags: Sequence[bool],
    provenance: Provenance,
    rows: Optional[List[Dict[str, Any]]] = None,
    details: Optional[Dict[str, Any]] = None,
) -> ExperimentResult:
    """Aggregate boolean replicate outcomes into a proportion with a Wilson interval."""
    trials = len(flags)
    successes = int(sum(bool(f) for f in flags))
    phat = successes / trials
    return ExperimentResult(
        kind=kind,
        estimate=phat,
        standard_error=math.sqrt(phat * (1.0 - phat) / trials),
        interval=wilson_interval(successes, trials),
        replicates=trials,
        details={"successes": successes, **(details or {})},
        rows=rows or [],
        provenance=provenance,
    )
