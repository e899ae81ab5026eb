"""
Discrete Boolean model on N^d: site s is open with probability p and, when open,
covers s + [0, rho_s]^d for an integer radius rho_s >= 1.

A point u can only be covered by sites s <= u, and s covers u exactly when
rho_s >= max_k(u_k - s_k). Uncovered-point probabilities are therefore exact
independence products over the dominated box, which is what the oracle computes.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from opentelemetry import trace
from scipy.stats import trim_mean

from src.core.discretization import mark_lattice_boxes
from src.core.distributions import (
    RadiusDistribution,
    at_least_probability,
    require_integer_valued,
    sample_many,
    tail_probability,
    tail_regime,
)
from src.core.verdicts import CoverageOutcome, DivergenceVerdict, RegimeReport, VerdictStatus
from src.utils.config import (
    GAUSS_BAND,
    GAUSS_TRIM_FRACTION,
    GUARD_BAND_FRACTION,
    GUARD_TRUNCATION_TOLERANCE,
    SpecValidationError,
)
from src.utils.stats import ExperimentResult, Provenance, map_replicates, summarize_proportion

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)


@dataclass(frozen=True)
class LatticeSpec:
    """Open probability p and integer radius law on N^d."""
    p: float
    rho: RadiusDistribution
    dimension: int = 2

    def __post_init__(self) -> None:
        if not 0.0 < self.p < 1.0:
            raise SpecValidationError("p", f"must lie in (0, 1), got {self.p}")
        if not 1 <= self.dimension <= 3:
            raise SpecValidationError("dimension", f"must lie in 1..3, got {self.dimension}")
        require_integer_valued(self.rho)


def _check_point(spec: LatticeSpec, point: Sequence[int]) -> Tuple[int, ...]:
    if len(point) != spec.dimension:
        raise SpecValidationError("point", f"expected {spec.dimension} coordinates, got {len(point)}")
    if any(int(c) != c or c < 1 for c in point):
        raise SpecValidationError("point", f"coordinates must be integers >= 1, got {tuple(point)}")
    return tuple(int(c) for c in point)


def _log_miss(spec: LatticeSpec, distances: np.ndarray) -> np.ndarray:
    """log P(a site at Chebyshev distance D misses its target) = log(1 - p P(rho >= D))."""
    reach = np.asarray(at_least_probability(spec.rho, distances.astype(float)), dtype=float).reshape(distances.shape)
    return np.log1p(-spec.p * reach)


def uncovered_prob_oracle(spec: LatticeSpec, point: Sequence[int]) -> float:
    """
    P(point is not covered), by independence over every dominated site.

    Sites are grouped by Chebyshev distance D from the point; the number with
    distance at most D inside the dominated box is prod_k min(D + 1, point_k).
    """
    u = _check_point(spec, point)
    distances = np.arange(max(u))
    within = np.prod(np.minimum(distances[:, None] + 1, np.asarray(u)[None, :]), axis=1)
    counts = np.diff(np.concatenate([[0], within]))
    return float(np.exp(np.sum(counts * _log_miss(spec, distances))))


def joint_uncovered_prob(spec: LatticeSpec, points: Sequence[Sequence[int]]) -> float:
    """
    P(no point in `points` is covered), by enumerating every site dominated by some point.

    A site misses all its dominating targets exactly when it is closed or its radius
    is below the smallest of those distances.
    """
    targets = np.array([_check_point(spec, p) for p in points], dtype=np.int64)
    if targets.size == 0:
        return 1.0
    top = targets.max(axis=0)
    grid = np.stack(np.meshgrid(*[np.arange(1, t + 1) for t in top], indexing="ij"), axis=-1).reshape(-1, spec.dimension)
    gaps = targets[None, :, :] - grid[:, None, :]
    dominated = np.all(gaps >= 0, axis=2)
    distance = np.where(dominated, gaps.max(axis=2), np.iinfo(np.int64).max)
    nearest = distance.min(axis=1)
    relevant = nearest < np.iinfo(np.int64).max
    return float(np.exp(_log_miss(spec, nearest[relevant]).sum()))


def _row_log_terms(spec: LatticeSpec, j: int, last: int) -> np.ndarray:
    """log P(A(i, j)) for i = j + 1 .. last by the regrouped product."""
    def g(t: np.ndarray) -> np.ndarray:
        return np.asarray(tail_probability(spec.rho, np.maximum(t, 0).astype(float)), dtype=float).reshape(t.shape)

    t = np.arange(1, j)
    diagonal = np.sum((2 * t + 1) * np.log1p(-spec.p * g(t - 1))) if j > 1 else 0.0
    shell = np.arange(j, last)
    shells = np.cumsum(j * np.log1p(-spec.p * g(shell - 1)))
    return math.log1p(-spec.p) + diagonal + shells


def uncovered_prob_formula(spec: LatticeSpec, i: int, j: int) -> float:
    """
    P(A(i, j)) for i > j >= 1 in d = 2 from the regrouped product

        (1 - p) * prod_{t=1}^{j-1} (1 - p G(t-1))^(2t+1) * prod_{D=j}^{i-1} (1 - p G(D-1))^j

    with G(x) = P(rho > x). Shell D holds 2D + 1 sites while D < j and j sites after.
    """
    if spec.dimension != 2:
        raise SpecValidationError("dimension", "the row formula is stated for d = 2")
    if not (int(i) == i and int(j) == j and i > j >= 1):
        raise SpecValidationError("i", f"need integers i > j >= 1, got i={i}, j={j}")
    return float(np.exp(_row_log_terms(spec, int(j), int(i))[-1]))


def row_terms(spec: LatticeSpec, j: int, last: int) -> np.ndarray:
    """Terms e_i = P(A(i, j)) for i = j + 1 .. last."""
    if spec.dimension != 2:
        raise SpecValidationError("dimension", "row terms are stated for d = 2")
    if last < j + 1:
        raise SpecValidationError("I", f"need I >= j + 1, got I={last}, j={j}")
    return np.exp(_row_log_terms(spec, j, last))


def series_partial_sums(spec: LatticeSpec, j: int, last: int) -> List[float]:
    """Partial sums of P(A(i, j)) over i = j + 1 .. last."""
    return np.cumsum(row_terms(spec, j, last)).tolist()


def gauss_test(
    terms: Sequence[float],
    first_index: int = 1,
    m_range: Optional[Tuple[int, int]] = None,
    band: Tuple[float, float] = GAUSS_BAND,
) -> DivergenceVerdict:
    """
    Classify sum e_m from the term-ratio model e_{m+1} / e_m = 1 - c / m.

    Each m in `m_range` gives c_m = m (1 - e_{m+1} / e_m); c is their trimmed mean.
    c <= band[0] diverges, c >= band[1] converges, anything between is indeterminate.

    Args:
        terms: e_m for m = first_index, first_index + 1, ...
        first_index: Index of terms[0]
        m_range: Inclusive (lo, hi) range of m; defaults to the second half of the terms
        band: Indeterminate band around the harmonic boundary c = 1
    """
    e = np.asarray(terms, dtype=float)
    last = first_index + e.size - 1
    lo, hi = m_range if m_range is not None else (first_index + e.size // 2, last - 1)
    if not (first_index <= lo <= hi <= last - 1):
        raise SpecValidationError("m_range", f"({lo}, {hi}) must lie within [{first_index}, {last - 1}]")

    sums = np.cumsum(e)
    trace_points = np.unique(np.linspace(0, e.size - 1, num=min(e.size, 20)).astype(int))
    evidence_sums = sums[trace_points].tolist()

    m = np.arange(lo, hi + 1)
    current = e[m - first_index]
    following = e[m - first_index + 1]
    live = current > 0
    if not live.any():
        return DivergenceVerdict(VerdictStatus.CONVERGES, None, {"reason": "all terms zero"}, evidence_sums)

    c_values = m[live] * (1.0 - following[live] / current[live])
    fitted = float(trim_mean(c_values, GAUSS_TRIM_FRACTION))
    if fitted <= band[0]:
        status = VerdictStatus.DIVERGES
    elif fitted >= band[1]:
        status = VerdictStatus.CONVERGES
    else:
        status = VerdictStatus.INDETERMINATE
    evidence = {"m_range": [int(lo), int(hi)], "band": list(band), "c_spread": float(np.std(c_values))}
    return DivergenceVerdict(status, fitted, evidence, evidence_sums)


def divergence_diagnostic(spec: LatticeSpec, j: int, m_range: Tuple[int, int]) -> DivergenceVerdict:
    """Gauss-test verdict on sum_i P(A(i, j)) over the given range of i."""
    lo, hi = m_range
    if lo < j + 1:
        raise SpecValidationError("m_range", f"must start at or after j + 1 = {j + 1}")
    with tracer.start_as_current_span("divergence_diagnostic") as span:
        span.set_attribute("j", j)
        terms = row_terms(spec, j, hi + 1)
        verdict = gauss_test(terms, first_index=j + 1, m_range=(lo, hi))
        logger.info(f"Row {j}: fitted Gauss exponent {verdict.fitted_c} -> {verdict.status.value}")
        return verdict


def renewal_identity_check(spec: LatticeSpec, j: int, pairs: Sequence[Tuple[int, int]]) -> float:
    """
    Worst |P(A(k,j) and A(i,j)) - P(A(k-i,j)) P(A(i,j))| over the pairs, with P(A(0,j)) = 1.

    The joint probability is enumerated directly; the product uses the oracle.
    """
    worst = 0.0
    for i, k in pairs:
        if not k >= i >= 1:
            raise SpecValidationError("pairs", f"need k >= i >= 1, got (i={i}, k={k})")
        first = _row_point(spec, i, j)
        second = _row_point(spec, k, j)
        joint = joint_uncovered_prob(spec, [first, second])
        shifted = 1.0 if k == i else uncovered_prob_oracle(spec, _row_point(spec, k - i, j))
        worst = max(worst, abs(joint - shifted * uncovered_prob_oracle(spec, first)))
    return worst


def _row_point(spec: LatticeSpec, i: int, j: int) -> Tuple[int, ...]:
    if spec.dimension == 1:
        return (i,)
    return (i,) + (j,) * (spec.dimension - 1)


@dataclass
class LatticeSimulation:
    """Covered-set summary of one lattice realization."""
    extent: int
    guard: int
    uncovered: np.ndarray
    t_hat_raw: int
    t_hat: Optional[int]
    truncation_note: bool
    open_sites: int = 0

    @property
    def uncovered_count(self) -> int:
        return int(self.uncovered.shape[0])


def guard_band(extent: int) -> int:
    return int(math.ceil(GUARD_BAND_FRACTION * extent))


def simulate_lattice(spec: LatticeSpec, extent: int, stream: np.random.Generator) -> LatticeSimulation:
    """
    Realize the open field and radii on {1..n}^d and summarize coverage of [1, n - g]^d.

    T-hat is the smallest t with [t, n - g]^d covered, i.e. one more than the
    largest minimum coordinate of an uncovered point. It counts as found only when
    T-hat <= (n - g) / 2.
    """
    if extent < 4:
        raise SpecValidationError("extent", f"must be at least 4, got {extent}")
    d = spec.dimension
    g = guard_band(extent)
    usable = extent - g

    open_mask = stream.random((extent,) * d) < spec.p
    sites = np.argwhere(open_mask)
    radii = sample_many(spec.rho, stream, sites.shape[0])
    reach = np.minimum(radii, extent).astype(np.int64)
    covered = mark_lattice_boxes(sites, sites + reach[:, None], extent, d)

    holes = np.argwhere(~covered[(slice(0, usable),) * d]) + 1
    t_raw = int(holes.min(axis=1).max()) + 1 if holes.size else 1
    truncated = float(tail_probability(spec.rho, float(g))) > GUARD_TRUNCATION_TOLERANCE
    return LatticeSimulation(
        extent=extent,
        guard=g,
        uncovered=holes,
        t_hat_raw=t_raw,
        t_hat=t_raw if t_raw <= usable / 2.0 else None,
        truncation_note=truncated,
        open_sites=int(sites.shape[0]),
    )


def simulate_lattice_experiment(spec: LatticeSpec, extent: int, replicates: int, seed: int) -> ExperimentResult:
    """Fraction of replicates in which an eventual-coverage threshold T-hat was found."""
    with tracer.start_as_current_span("simulate_lattice_experiment") as span:
        span.set_attribute("extent", extent)
        span.set_attribute("replicates", replicates)

        def one(r: int, stream: np.random.Generator) -> Dict[str, Any]:
            sim = simulate_lattice(spec, extent, stream)
            return {"replicate": r, "t_hat": sim.t_hat if sim.t_hat is not None else "",
                    "t_hat_raw": sim.t_hat_raw, "found": sim.t_hat is not None,
                    "uncovered": sim.uncovered_count, "truncated": sim.truncation_note}

        rows = map_replicates(one, seed, replicates)
        return summarize_proportion(
            "lattice_simulation",
            [row["found"] for row in rows],
            Provenance.for_payload({**asdict(spec), "extent": extent}, seed),
            rows=rows,
            details={"guard": guard_band(extent), "truncation_note": any(row["truncated"] for row in rows),
                     "verdict": proposition_verdict(spec).to_dict() if spec.dimension >= 2 else None},
        )


def estimate_uncovered_probability(
    spec: LatticeSpec,
    point: Sequence[int],
    replicates: int,
    seed: int,
) -> ExperimentResult:
    """Monte Carlo frequency of `point` being uncovered, simulating only its dominated box."""
    u = np.asarray(_check_point(spec, point))
    grid = np.stack(np.meshgrid(*[np.arange(1, t + 1) for t in u], indexing="ij"), axis=-1).reshape(-1, spec.dimension)
    distance = (u[None, :] - grid).max(axis=1)

    def one(r: int, stream: np.random.Generator) -> bool:
        is_open = stream.random(distance.size) < spec.p
        radii = sample_many(spec.rho, stream, distance.size)
        return not bool(np.any(is_open & (radii >= distance)))

    flags = map_replicates(one, seed, replicates)
    return summarize_proportion(
        "lattice_point",
        flags,
        Provenance.for_payload({**asdict(spec), "point": u.tolist()}, seed),
        details={"oracle": uncovered_prob_oracle(spec, tuple(u.tolist()))},
    )


def proposition_verdict(spec: LatticeSpec) -> RegimeReport:
    """
    Eventual coverage of N^d for d >= 2: almost sure when liminf j G(j) > 0,
    impossible when j G(j) -> 0.
    """
    if spec.dimension < 2:
        raise SpecValidationError("dimension", "the eventual-coverage dichotomy needs d >= 2")
    l, big_l = tail_regime(spec.rho)
    evidence = {"l": l, "L": big_l, "p": spec.p}
    if l > 0:
        return RegimeReport(CoverageOutcome.COVERS, evidence)
    if big_l == 0.0:
        return RegimeReport(CoverageOutcome.DOES_NOT_COVER, evidence)
    return RegimeReport(CoverageOutcome.INDETERMINATE, evidence)


def series_table(spec: LatticeSpec, j: int, last: int) -> List[Dict[str, Any]]:
    """Rows (i, j, P_formula, P_oracle, partial_sum) for i = j + 1 .. last."""
    terms = row_terms(spec, j, last)
    sums = np.cumsum(terms)
    rows = []
    for offset, i in enumerate(range(j + 1, last + 1)):
        rows.append({
            "i": i,
            "j": j,
            "P_formula": float(terms[offset]),
            "P_oracle": uncovered_prob_oracle(spec, (i, j)),
            "partial_sum": float(sums[offset]),
        })
    return rows
