"""
Interval processes on the line and the circle: the line-coverage integral
criterion, random Cantor set criteria, and a torus simulation of the Cantor
construction.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from opentelemetry import trace
from scipy import integrate

from src.core.geometry import gaps_from_arrays
from src.core.verdicts import DivergenceVerdict, VerdictStatus
from src.utils.config import BOUNDARY_TOLERANCE, SpecValidationError
from src.utils.stats import ExperimentResult, Provenance, map_replicates, summarize_mean

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)


@dataclass(frozen=True)
class PowerPiece:
    """Density beta * y^(-gamma) on (a, b); b may be math.inf."""
    a: float
    b: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.a < self.b):
            raise SpecValidationError("pieces", f"need 0 <= a < b, got ({self.a}, {self.b})")
        if not (self.beta > 0 and self.gamma > 0):
            raise SpecValidationError("pieces", f"beta and gamma must be positive, got {self.beta}, {self.gamma}")


@dataclass(frozen=True)
class LengthMeasure:
    """Length measure mu: point masses plus power-law density pieces."""
    atoms: Tuple[Tuple[float, float], ...] = ()
    pieces: Tuple[PowerPiece, ...] = ()

    def __post_init__(self) -> None:
        for y, mass in self.atoms:
            if not (y > 0 and mass > 0):
                raise SpecValidationError("atoms", f"atoms need positive location and mass, got ({y}, {mass})")
        spans = sorted((p.a, p.b) for p in self.pieces)
        for (_, right), (left, _) in zip(spans, spans[1:]):
            if left < right:
                raise SpecValidationError("pieces", "density pieces must not overlap")


def _power_integral(p: float, lo: float, hi: float) -> float:
    """Integral of y^p over (lo, hi), possibly infinite."""
    if math.isinf(hi):
        if p >= -1.0:
            return math.inf
        return -lo ** (p + 1.0) / (p + 1.0)
    if lo == 0.0 and p <= -1.0:
        return math.inf
    if p == -1.0:
        return math.log(hi / lo)
    return (hi ** (p + 1.0) - lo ** (p + 1.0)) / (p + 1.0)


def _piece_inner(piece: PowerPiece, x: float) -> float:
    lo = max(piece.a, x)
    if lo >= piece.b:
        return 0.0
    if math.isinf(piece.b) and piece.gamma <= 2.0:
        return math.inf
    first = _power_integral(1.0 - piece.gamma, lo, piece.b)
    second = _power_integral(-piece.gamma, lo, piece.b)
    return piece.beta * (first - x * second)


def shepp_inner(mu: LengthMeasure, x: float) -> float:
    """
    Integral of (y - x) over mu on (x, inf), in closed form per atom and piece.

    Returns math.inf when an unbounded piece decays no faster than y^-2.
    """
    if not 0.0 < x < 1.0:
        raise SpecValidationError("x", f"must lie in (0, 1), got {x}")
    total = sum(mass * (y - x) for y, mass in mu.atoms if y > x)
    for piece in mu.pieces:
        total += _piece_inner(piece, x)
        if math.isinf(total):
            return math.inf
    return float(total)


def _log_slope(mu: LengthMeasure, near: float = 1e-4, nearer: float = 1e-6) -> float:
    """Growth of the inner integral per unit of log(1/x) close to 0."""
    return (shepp_inner(mu, nearer) - shepp_inner(mu, near)) / (math.log(1.0 / nearer) - math.log(1.0 / near))


def shepp_criterion(mu: LengthMeasure) -> DivergenceVerdict:
    """
    Decide whether the integral over (0, 1) of exp(shepp_inner(x)) diverges; divergence means the line is covered.

    Near 0 only density pieces starting at 0 matter: gamma > 2 makes the inner
    integral blow up polynomially, gamma = 2 makes exp(inner) behave as
    x^(-sum beta), and gamma < 2 keeps it bounded.
    """
    with tracer.start_as_current_span("shepp_criterion"):
        if any(math.isinf(p.b) and p.gamma <= 2.0 for p in mu.pieces):
            return DivergenceVerdict(VerdictStatus.DIVERGES, math.inf,
                                     {"reason": "inner integral infinite", "covered": True})

        at_zero = [p for p in mu.pieces if p.a == 0.0]
        steep = [p for p in at_zero if p.gamma > 2.0]
        log_exponent = sum(p.beta for p in at_zero if p.gamma == 2.0)
        fitted = _log_slope(mu)
        evidence: Dict[str, Any] = {"log_exponent": log_exponent, "steep_pieces": len(steep)}

        if steep:
            status = VerdictStatus.DIVERGES
        elif log_exponent >= 1.0 - BOUNDARY_TOLERANCE:
            status = VerdictStatus.DIVERGES
        else:
            status = VerdictStatus.CONVERGES
            breaks = sorted({y for y, _ in mu.atoms if 0 < y < 1} | {p.a for p in mu.pieces if 0 < p.a < 1})
            value, _ = integrate.quad(lambda x: math.exp(shepp_inner(mu, x)), 0.0, 1.0,
                                      points=breaks or None, limit=200)
            evidence["integral"] = float(value)
        evidence["covered"] = status is VerdictStatus.DIVERGES
        return DivergenceVerdict(status, fitted, evidence)


@dataclass(frozen=True)
class CantorSequence:
    """
    Lengths t_1 >= t_2 >= ... for the random Cantor construction, with intensity lambda.

    Either `explicit` holds the lengths, or t_n = scale / n^exponent.
    """
    intensity: float
    explicit: Tuple[float, ...] = ()
    scale: Optional[float] = None
    exponent: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.intensity > 0:
            raise SpecValidationError("intensity", f"must be positive, got {self.intensity}")
        if self.is_parametric:
            if self.explicit:
                raise SpecValidationError("explicit", "give either explicit lengths or a parametric form")
            if self.scale is None or self.exponent is None:
                raise SpecValidationError("scale", "parametric lengths need both c and gamma")
            if not (0 < self.scale <= 1.0 and self.exponent > 0):
                raise SpecValidationError("scale", f"need 0 < c <= 1 and gamma > 0, got c={self.scale}, gamma={self.exponent}")
        else:
            if not self.explicit:
                raise SpecValidationError("explicit", "explicit sequences need at least one length")
            t = np.asarray(self.explicit, dtype=float)
            if t[0] > 1.0 or np.any(t <= 0) or np.any(np.diff(t) > 0):
                raise SpecValidationError("explicit", "lengths must satisfy 1 >= t_1 >= t_2 >= ... > 0")

    @property
    def is_parametric(self) -> bool:
        return self.scale is not None or self.exponent is not None

    def lengths(self, K: int) -> np.ndarray:
        """The first K lengths."""
        if K < 1:
            raise SpecValidationError("K", f"must be at least 1, got {K}")
        if self.is_parametric:
            return self.scale / np.arange(1, K + 1, dtype=float) ** self.exponent
        if K > len(self.explicit):
            raise SpecValidationError("K", f"only {len(self.explicit)} explicit lengths available")
        return np.asarray(self.explicit[:K], dtype=float)


def _trace(values: np.ndarray, points: int = 20) -> List[float]:
    sums = np.cumsum(values)
    idx = np.unique(np.linspace(0, sums.size - 1, num=min(points, sums.size)).astype(int))
    return sums[idx].tolist()


def cantor_measure_criterion(seq: CantorSequence) -> DivergenceVerdict:
    """
    Whether sum t_i diverges, i.e. whether the vacant set has Lebesgue measure zero.

    Parametric lengths c / n^gamma diverge exactly when gamma <= 1; an explicit
    finite list cannot decide and is reported as indeterminate with its partial sums.
    """
    if not seq.is_parametric:
        return DivergenceVerdict(VerdictStatus.INDETERMINATE, None, {"terms": len(seq.explicit)},
                                 _trace(np.asarray(seq.explicit)))
    status = VerdictStatus.DIVERGES if seq.exponent <= 1.0 else VerdictStatus.CONVERGES
    return DivergenceVerdict(status, float(seq.exponent), {"measure_zero": status is VerdictStatus.DIVERGES},
                             _trace(seq.lengths(1000)))


def _empty_series_terms(seq: CantorSequence, K: int) -> np.ndarray:
    t = seq.lengths(K)
    n = np.arange(1, K + 1, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(seq.intensity * np.cumsum(t) - 2.0 * np.log(n))


def cantor_empty_criterion(seq: CantorSequence) -> DivergenceVerdict:
    """
    Whether sum n^-2 exp(lambda (t_1 + ... + t_n)) diverges, i.e. whether the vacant set is empty a.s.

    For t_n = c / n the partial sums of t grow as c log n, so the terms behave
    as n^(lambda c - 2): divergence exactly when lambda c >= 1. Slower decay
    (gamma < 1) always diverges; faster decay (gamma > 1) never does.
    """
    if not seq.is_parametric:
        terms = _empty_series_terms(seq, len(seq.explicit))
        return DivergenceVerdict(VerdictStatus.INDETERMINATE, None, {"terms": len(seq.explicit)}, _trace(terms))

    lam_c = seq.intensity * seq.scale
    evidence: Dict[str, Any] = {"lambda_c": lam_c, "gamma": seq.exponent}
    if seq.exponent == 1.0:
        fitted = 2.0 - lam_c
        status = VerdictStatus.DIVERGES if lam_c >= 1.0 - BOUNDARY_TOLERANCE else VerdictStatus.CONVERGES
    elif seq.exponent < 1.0:
        fitted = -math.inf
        status = VerdictStatus.DIVERGES
    else:
        fitted = 2.0
        status = VerdictStatus.CONVERGES
    evidence["empty"] = status is VerdictStatus.DIVERGES
    return DivergenceVerdict(status, fitted, evidence, _trace(_empty_series_terms(seq, 1000)))


@dataclass
class CantorSample:
    vacant_measure: float
    gaps: List[Tuple[float, float]] = field(default_factory=list)
    levels: int = 0


def torus_intervals(starts: np.ndarray, length: float) -> Tuple[np.ndarray, np.ndarray]:
    """Arcs (x, x + length) of the unit circle as intervals of [0, 1], splitting at 1."""
    ends = starts + length
    wraps = ends > 1.0
    lo = np.concatenate([starts, np.zeros(int(wraps.sum()))])
    hi = np.concatenate([np.minimum(ends, 1.0), np.minimum(ends[wraps] - 1.0, 1.0)])
    return lo, hi


def simulate_cantor(seq: CantorSequence, K: int, stream: np.random.Generator) -> CantorSample:
    """
    Superpose K Poisson(lambda) arc processes on the unit circle, level i with arcs of length t_i.

    Levels are drawn in order, so a run with fewer levels on the same stream
    sees the same first levels.
    """
    lengths = seq.lengths(K)
    lows, highs = [], []
    for t in lengths:
        count = int(stream.poisson(seq.intensity))
        lo, hi = torus_intervals(stream.random(count), float(t))
        lows.append(lo)
        highs.append(hi)
    gaps = gaps_from_arrays(np.concatenate(lows), np.concatenate(highs), 0.0, 1.0)
    return CantorSample(float(sum(b - a for a, b in gaps)), gaps, K)


def cantor_vacancy_exact(seq: CantorSequence, K: int) -> float:
    """exp(-lambda (t_1 + ... + t_K)) on the unit circle."""
    return math.exp(-seq.intensity * float(seq.lengths(K).sum()))


def estimate_cantor_vacancy(seq: CantorSequence, K: int, replicates: int, seed: int) -> ExperimentResult:
    """Mean vacant measure after K levels, with gap counts per replicate."""
    with tracer.start_as_current_span("estimate_cantor_vacancy") as span:
        span.set_attribute("levels", K)
        span.set_attribute("replicates", replicates)

        def one(r: int, stream: np.random.Generator) -> Dict[str, Any]:
            sample = simulate_cantor(seq, K, stream)
            return {"replicate": r, "vacancy": sample.vacant_measure, "gaps": len(sample.gaps)}

        rows = map_replicates(one, seed, replicates)
        return summarize_mean(
            "cantor",
            [row["vacancy"] for row in rows],
            Provenance.for_payload({**asdict(seq), "levels": K}, seed),
            rows=rows,
            details={
                "exact": cantor_vacancy_exact(seq, K),
                "measure_verdict": cantor_measure_criterion(seq).to_dict() if seq.is_parametric else None,
                "empty_verdict": cantor_empty_criterion(seq).to_dict() if seq.is_parametric else None,
            },
        )
