"""
One-dimensional Markov coverage model.

X_1, X_2, ... is a {0, 1} Markov chain; an open site s covers [s, s + rho_s] with
integer rho_s >= 1. A_k is the event that site k is not covered by sites 1..k.
With P_x(A_k) = P(A_k | X_1 = x):

    P_0(A_{k+1}) = p00 P_0(A_k) + p01 P_1(A_k)
    P_1(A_{k+1}) = F(k - 1) (p10 P_0(A_k) + p11 P_1(A_k))

from P_0(A_1) = 1, P_1(A_1) = 0, where F(m) = P(rho <= m).
"""
import itertools
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as poly
from opentelemetry import trace

from src.core.discretization import mark_lattice_boxes
from src.core.distributions import RadiusDistribution, cdf, require_integer_valued, sample_many, tail_regime
from src.core.verdicts import CoverageOutcome, RegimeReport
from src.utils.config import (
    BOUNDARY_TOLERANCE,
    GUARD_BAND_FRACTION,
    MAX_ENUMERATION_LENGTH,
    SpecValidationError,
)
from src.utils.stats import ExperimentResult, Provenance, map_replicates, summarize_proportion

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

ROW_TOLERANCE = 1e-12


class InitialState(Enum):
    STATIONARY = "stationary"
    START_AT_0 = "start-at-0"
    START_AT_1 = "start-at-1"


@dataclass(frozen=True)
class MarkovCoverageSpec:
    """Transition probabilities, integer radius law and the law of X_1."""
    p00: float
    p01: float
    p10: float
    p11: float
    rho: RadiusDistribution
    initial: InitialState = InitialState.STATIONARY

    def __post_init__(self) -> None:
        for name in ("p00", "p01", "p10", "p11"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise SpecValidationError(name, f"must lie in [0, 1], got {value}")
        if not 0.0 < self.p00 < 1.0:
            raise SpecValidationError("p00", f"must lie strictly between 0 and 1, got {self.p00}")
        if not 0.0 < self.p10 < 1.0:
            raise SpecValidationError("p10", f"must lie strictly between 0 and 1, got {self.p10}")
        if abs(self.p00 + self.p01 - 1.0) > ROW_TOLERANCE:
            raise SpecValidationError("p01", f"p00 + p01 must be 1, got {self.p00 + self.p01!r}")
        if abs(self.p10 + self.p11 - 1.0) > ROW_TOLERANCE:
            raise SpecValidationError("p11", f"p10 + p11 must be 1, got {self.p10 + self.p11!r}")
        require_integer_valued(self.rho)

    @classmethod
    def from_off_diagonal(cls, p01: float, p10: float, rho: RadiusDistribution,
                          initial: InitialState = InitialState.STATIONARY) -> "MarkovCoverageSpec":
        return cls(1.0 - p01, p01, p10, 1.0 - p10, rho, initial)

    @property
    def transition(self) -> np.ndarray:
        return np.array([[self.p00, self.p01], [self.p10, self.p11]])

    @property
    def initial_distribution(self) -> np.ndarray:
        if self.initial is InitialState.START_AT_0:
            return np.array([1.0, 0.0])
        if self.initial is InitialState.START_AT_1:
            return np.array([0.0, 1.0])
        total = self.p01 + self.p10
        return np.array([self.p10 / total, self.p01 / total])


@dataclass(frozen=True)
class RecurrenceTable:
    """P_0(A_k), P_1(A_k) and P(A_k) under the initial law, for k = 1..K."""
    p0: np.ndarray
    p1: np.ndarray
    total: np.ndarray

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {"k": k + 1, "P0": float(self.p0[k]), "P1": float(self.p1[k]), "P_initial": float(self.total[k])}
            for k in range(self.p0.size)
        ]


def recurrence_table(spec: MarkovCoverageSpec, K: int) -> RecurrenceTable:
    """Iterate the two-state recurrences K - 1 times from P_0(A_1) = 1, P_1(A_1) = 0."""
    if K < 1:
        raise SpecValidationError("K", f"must be at least 1, got {K}")
    p0 = np.empty(K)
    p1 = np.empty(K)
    p0[0], p1[0] = 1.0, 0.0
    fails = np.asarray(cdf(spec.rho, np.arange(max(K - 1, 1), dtype=float)), dtype=float).reshape(-1)
    for k in range(1, K):
        p0[k] = spec.p00 * p0[k - 1] + spec.p01 * p1[k - 1]
        p1[k] = fails[k - 1] * (spec.p10 * p0[k - 1] + spec.p11 * p1[k - 1])
    initial = spec.initial_distribution
    return RecurrenceTable(p0, p1, initial[0] * p0 + initial[1] * p1)


def _paths(k: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=k)), dtype=np.int64)


def _path_probabilities(spec: MarkovCoverageSpec, paths: np.ndarray) -> np.ndarray:
    transition = spec.transition
    probs = spec.initial_distribution[paths[:, 0]]
    for step in range(1, paths.shape[1]):
        probs = probs * transition[paths[:, step - 1], paths[:, step]]
    return probs


def _miss_probability(spec: MarkovCoverageSpec, sites: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    """P(an open site misses every target it could reach): rho <= min distance - 1, zero at distance 0."""
    nearest = np.min(np.stack([np.where(sites <= t, t - sites, np.iinfo(np.int64).max) for t in targets]), axis=0)
    out = np.ones(sites.shape, dtype=float)
    reachable = nearest < np.iinfo(np.int64).max
    out[reachable] = np.asarray(cdf(spec.rho, (nearest[reachable] - 1).clip(min=0).astype(float)), dtype=float)
    out[reachable & (nearest == 0)] = 0.0
    return out


def _enumerate(spec: MarkovCoverageSpec, targets: Sequence[int]) -> float:
    k = max(targets)
    if k > MAX_ENUMERATION_LENGTH:
        raise SpecValidationError("k", f"enumeration supports k <= {MAX_ENUMERATION_LENGTH}, got {k}")
    paths = _paths(k)
    sites = np.arange(1, k + 1)
    miss = _miss_probability(spec, sites, targets)
    survive = np.prod(np.where(paths == 1, miss[None, :], 1.0), axis=1)
    return float(np.sum(_path_probabilities(spec, paths) * survive))


def brute_force_uncovered(spec: MarkovCoverageSpec, k: int) -> float:
    """
    P(A_k) by summing over all 2^k chain paths.

    On a path, open site i < k misses k exactly when rho_i <= k - i - 1; an open
    site k always covers k.
    """
    if k < 1:
        raise SpecValidationError("k", f"must be at least 1, got {k}")
    return _enumerate(spec, [k])


def joint_uncovered(spec: MarkovCoverageSpec, i: int, k: int) -> float:
    """P(A_i and A_k) by path enumeration."""
    return _enumerate(spec, [i, k])


def renewal_identity_check(spec: MarkovCoverageSpec, pairs: Sequence[Tuple[int, int]], literal: bool = False) -> float:
    """
    Worst deviation of the renewal product over the pairs (i, k), k >= i.

    The chain restarts from the closed site i, so P(A_i and A_k) = P(A_i) P_0(A_{k-i+1}).
    With `literal`, the comparison is against P(A_{k-i}) P(A_i) with P(A_0) = 1,
    which coincides with the exact form for i.i.d. sites under the stationary law.
    """
    worst = 0.0
    top = max(k for _, k in pairs)
    table = recurrence_table(spec, top + 1)
    for i, k in pairs:
        if not k >= i >= 1:
            raise SpecValidationError("pairs", f"need k >= i >= 1, got (i={i}, k={k})")
        joint = joint_uncovered(spec, i, k)
        if literal:
            restart = 1.0 if k == i else float(table.total[k - i - 1])
        else:
            restart = float(table.p0[k - i])
        worst = max(worst, abs(joint - float(table.total[i - 1]) * restart))
    return worst


def stationary_open_fraction(spec: MarkovCoverageSpec) -> float:
    """pi_1 = p01 / (p01 + p10)."""
    return spec.p01 / (spec.p01 + spec.p10)


def threshold_classify(spec: MarkovCoverageSpec) -> RegimeReport:
    """
    Eventual coverage of N from the tail functionals l, L of rho.

    Covers when l > 1 and pi_1 > 1/l; does not cover when pi_1 < 1/L (L = 0 reads
    as 1/L = inf); indeterminate otherwise.
    """
    l, big_l = tail_regime(spec.rho)
    pi1 = stationary_open_fraction(spec)
    inv_l = 1.0 / l if l > 0 else math.inf
    inv_big_l = 1.0 / big_l if big_l > 0 else math.inf
    evidence = {"l": l, "L": big_l, "pi1": pi1, "inv_l": inv_l, "inv_L": inv_big_l}
    if l > 1.0 and pi1 > inv_l:
        return RegimeReport(CoverageOutcome.COVERS, evidence)
    if pi1 < inv_big_l:
        return RegimeReport(CoverageOutcome.DOES_NOT_COVER, evidence)
    return RegimeReport(CoverageOutcome.INDETERMINATE, evidence)


def generating_function_partial(spec: MarkovCoverageSpec, s: float, k0: int, K: int) -> Tuple[float, float]:
    """sum_{k=k0}^{K} P_x(A_k) s^k for x = 0 and x = 1."""
    if not 0.0 < s < 1.0:
        raise SpecValidationError("s", f"must lie in (0, 1), got {s}")
    if not 1 <= k0 <= K:
        raise SpecValidationError("k0", f"need 1 <= k0 <= K, got k0={k0}, K={K}")
    table = recurrence_table(spec, K)
    powers = s ** np.arange(k0, K + 1)
    return float(np.dot(table.p0[k0 - 1:], powers)), float(np.dot(table.p1[k0 - 1:], powers))


def polynomial_P(spec: MarkovCoverageSpec) -> np.ndarray:
    """Coefficients (ascending) of (1 - p00 s)(1 - s)(1 - (1 - p01 - p10) s)."""
    c = 1.0 - spec.p01 - spec.p10
    return poly.polymul(poly.polymul([1.0, -spec.p00], [1.0, -1.0]), [1.0, -c])


def polynomial_Q(spec: MarkovCoverageSpec, C: float) -> np.ndarray:
    """
    Coefficients (ascending) of

        (1 - p00 s)^2 (1 - C) p11 + (1 - C) p10 p01 s (1 - p00 s)
        + p10 p01 s (1 - p00 s) + p10 p00 p01 s^2
    """
    a = spec.p00
    base = [1.0, -a]
    squared = poly.polymul(base, base)
    s_times_base = poly.polymul([0.0, 1.0], base)
    terms = [
        (1.0 - C) * spec.p11 * squared,
        (1.0 - C) * spec.p10 * spec.p01 * s_times_base,
        spec.p10 * spec.p01 * s_times_base,
        np.array([0.0, 0.0, spec.p10 * a * spec.p01]),
    ]
    total = np.zeros(3)
    for term in terms:
        total[: len(term)] += term
    return total


def polynomial_R(spec: MarkovCoverageSpec, C: float, k0: int) -> Callable[[float], float]:
    """R(s) for the given k0, with P_0(A_k0) and P_1(A_k0) from the recurrence table."""
    table = recurrence_table(spec, k0)
    p0_k0, p1_k0 = float(table.p0[-1]), float(table.p1[-1])
    a = spec.p00

    def evaluate(s: float) -> float:
        return (
            (1.0 - a * s) ** 2 * k0 * s ** (k0 - 1) * p1_k0
            + (k0 + 1.0 - C) * spec.p10 * s ** k0 * (1.0 - a * s) * p0_k0
            + spec.p10 * s ** (k0 + 1) * a * p0_k0
        )

    return evaluate


def k0_conditions(spec: MarkovCoverageSpec, C: float, k0: int, horizon: int = 10_000) -> Dict[str, bool]:
    """
    The four requirements on k0: k0 + 1 - C > 0, P_0(A_k0) > 0, P_1(A_k0) > 0, and
    F(k - 1) >= 1 - C / (k + 1) for k0 <= k <= horizon.
    """
    if k0 < 1 or horizon < k0:
        raise SpecValidationError("k0", f"need 1 <= k0 <= horizon, got k0={k0}, horizon={horizon}")
    table = recurrence_table(spec, k0)
    ks = np.arange(k0, horizon + 1, dtype=float)
    fails = np.asarray(cdf(spec.rho, ks - 1.0), dtype=float)
    return {
        "shift_positive": k0 + (1.0 - C) > 0,
        "p0_positive": bool(table.p0[-1] > 0),
        "p1_positive": bool(table.p1[-1] > 0),
        "tail_bound": bool(np.all(fails >= 1.0 - C / (ks + 1.0) - BOUNDARY_TOLERANCE)),
    }


def partial_fraction_decomposition(spec: MarkovCoverageSpec, C: float) -> Tuple[float, float, float]:
    """
    (D, E, F) with Q(s)/P(s) = D/(1 - p00 s) + E/(1 - s) + F/(1 - c s), c = 1 - p01 - p10.

    Solved from the polynomial identity Q = D(1-s)(1-cs) + E(1-p00 s)(1-cs) + F(1-p00 s)(1-s).
    """
    if spec.p01 + spec.p10 == 0:
        raise SpecValidationError("p01", "p01 + p10 must be positive")
    a, c = spec.p00, 1.0 - spec.p01 - spec.p10
    columns = [
        poly.polymul([1.0, -1.0], [1.0, -c]),
        poly.polymul([1.0, -a], [1.0, -c]),
        poly.polymul([1.0, -a], [1.0, -1.0]),
    ]
    matrix = np.zeros((3, 3))
    for col, coeffs in enumerate(columns):
        matrix[: len(coeffs), col] = coeffs
    d_coef, e_coef, f_coef = np.linalg.solve(matrix, polynomial_Q(spec, C))
    return float(d_coef), float(e_coef), float(f_coef)


def partial_fraction_E(spec: MarkovCoverageSpec, C: float) -> float:
    """
    Coefficient of 1/(1 - s) in Q(s)/P(s): Q(1) / ((1 - p00)(p01 + p10)).

    Positive exactly when pi_1 < 1/C; it equals 1 - C pi_1.
    """
    if not C > 0:
        raise SpecValidationError("C", f"must be positive, got {C}")
    if spec.p01 + spec.p10 == 0:
        raise SpecValidationError("p01", "p01 + p10 must be positive")
    q_at_one = float(poly.polyval(1.0, polynomial_Q(spec, C)))
    return q_at_one / ((1.0 - spec.p00) * (spec.p01 + spec.p10))


def _realize_chain(spec: MarkovCoverageSpec, n: int, stream: np.random.Generator) -> np.ndarray:
    """States X_1..X_n built from alternating geometric sojourns."""
    state = int(stream.random() < spec.initial_distribution[1])
    leave = (spec.p01, spec.p10)
    pieces: List[np.ndarray] = []
    total = 0
    while total < n:
        # sojourn lengths for the next 64 alternations
        batch = 64
        lengths = np.empty(batch, dtype=np.int64)
        lengths[0::2] = stream.geometric(leave[state], size=batch // 2)
        lengths[1::2] = stream.geometric(leave[1 - state], size=batch // 2)
        states = np.tile([state, 1 - state], batch // 2)
        pieces.append(np.repeat(states, lengths))
        total += int(lengths.sum())
    return np.concatenate(pieces)[:n]


def uncovered_sites(spec: MarkovCoverageSpec, n: int, stream: np.random.Generator) -> np.ndarray:
    """1-based indices in 1..n not covered by the open sites among 1..n."""
    chain = _realize_chain(spec, n, stream)
    sites = np.flatnonzero(chain == 1)
    radii = sample_many(spec.rho, stream, sites.size)
    reach = np.minimum(radii, n).astype(np.int64)
    covered = mark_lattice_boxes(sites[:, None], (sites + reach)[:, None], n, 1)
    return np.flatnonzero(~covered) + 1


@dataclass
class MarkovSimulation:
    extent: int
    guard: int
    last_uncovered: Optional[int]
    uncovered_count: int
    uncovered_beyond: int


def simulate_markov_coverage(
    spec: MarkovCoverageSpec,
    n: int,
    stream: np.random.Generator,
    beyond: int = 100,
) -> MarkovSimulation:
    """
    Realize the chain and radii on 1..n and summarize the uncovered sites in [1, n - g].

    Args:
        spec: Model parameters
        n: Number of sites, at least 2
        stream: Caller-owned random stream
        beyond: Index after which uncovered sites are counted separately
    """
    if n < 2:
        raise SpecValidationError("n", f"must be at least 2, got {n}")
    g = int(math.ceil(GUARD_BAND_FRACTION * n))
    holes = uncovered_sites(spec, n, stream)
    holes = holes[holes <= n - g]
    return MarkovSimulation(
        extent=n,
        guard=g,
        last_uncovered=int(holes[-1]) if holes.size else None,
        uncovered_count=int(holes.size),
        uncovered_beyond=int(np.sum(holes > beyond)),
    )


def expected_uncovered_count(spec: MarkovCoverageSpec, lo: int, hi: int) -> float:
    """sum_{k=lo}^{hi} P(A_k) under the initial law."""
    if not 1 <= lo <= hi:
        raise SpecValidationError("lo", f"need 1 <= lo <= hi, got lo={lo}, hi={hi}")
    return float(recurrence_table(spec, hi).total[lo - 1:].sum())


def simulate_markov_experiment(
    spec: MarkovCoverageSpec,
    n: int,
    replicates: int,
    seed: int,
    beyond: int = 100,
) -> ExperimentResult:
    """Fraction of replicates with no uncovered site past `beyond`, plus exact expected counts."""
    with tracer.start_as_current_span("simulate_markov_experiment") as span:
        span.set_attribute("n", n)
        span.set_attribute("replicates", replicates)

        def one(r: int, stream: np.random.Generator) -> Dict[str, Any]:
            sim = simulate_markov_coverage(spec, n, stream, beyond)
            return {"replicate": r, "last_uncovered": sim.last_uncovered if sim.last_uncovered is not None else "",
                    "uncovered": sim.uncovered_count, "uncovered_beyond": sim.uncovered_beyond,
                    "clear_beyond": sim.uncovered_beyond == 0}

        rows = map_replicates(one, seed, replicates)
        g = int(math.ceil(GUARD_BAND_FRACTION * n))
        upper = n - g
        details = {
            "beyond": beyond,
            "mean_uncovered_beyond": float(np.mean([row["uncovered_beyond"] for row in rows])),
            "expected_uncovered_beyond": expected_uncovered_count(spec, beyond + 1, upper) if upper > beyond else 0.0,
            "verdict": threshold_classify(spec).to_dict(),
        }
        return summarize_proportion(
            "markov_simulation",
            [row["clear_beyond"] for row in rows],
            Provenance.for_payload({**asdict(spec), "n": n, "beyond": beyond}, seed),
            rows=rows,
            details=details,
        )


def estimate_uncovered_frequency(spec: MarkovCoverageSpec, k: int, replicates: int, seed: int) -> ExperimentResult:
    """Monte Carlo frequency of A_k, simulating sites 1..k only."""

    def one(r: int, stream: np.random.Generator) -> bool:
        holes = uncovered_sites(spec, k, stream)
        return bool(holes.size and holes[-1] == k)

    flags = map_replicates(one, seed, replicates)
    return summarize_proportion(
        "markov_site",
        flags,
        Provenance.for_payload({**asdict(spec), "k": k}, seed),
        details={"exact": float(recurrence_table(spec, k).total[-1])},
    )
