"""
Radius laws for the Boolean models: tail functions, moments, tail regimes and inverse-CDF sampling.

Tail convention: G(x) = P(rho > x), strict. The lattice and Markov models need
P(rho >= t), which for integer laws is G(t - 1); `at_least_probability` is the
single place that translation happens.
"""
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, NamedTuple, Tuple, Union

import numpy as np

from src.utils.config import SpecValidationError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

MASS_TOLERANCE = 1e-12


class DistributionKind(Enum):
    """Supported radius laws."""
    DEGENERATE = "degenerate"
    UNIFORM = "uniform"
    PARETO = "pareto"
    TABLE = "table"
    DISCRETE_PARETO = "discrete_pareto"
    HEAVY = "heavy"


class TailRegime(NamedTuple):
    """liminf and limsup of x * G(x) as x grows."""
    liminf: float
    limsup: float


@dataclass(frozen=True)
class RadiusDistribution:
    """
    Law of the radius rho.

    Only the parameters of `kind` are meaningful; use the constructors below
    rather than the raw dataclass.
    """
    kind: DistributionKind
    value: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    c: float = 1.0
    alpha: float = 1.0
    values: Tuple[int, ...] = field(default_factory=tuple)
    masses: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.kind is DistributionKind.DEGENERATE:
            if not self.value > 0:
                raise SpecValidationError("rho", f"degenerate radius must be positive, got {self.value}")
        elif self.kind is DistributionKind.UNIFORM:
            if not (0.0 <= self.lo < self.hi < math.inf):
                raise SpecValidationError("rho", f"uniform needs 0 <= lo < hi < inf, got ({self.lo}, {self.hi})")
        elif self.kind in (DistributionKind.PARETO, DistributionKind.DISCRETE_PARETO):
            if not (0.0 < self.c < math.inf):
                raise SpecValidationError("rho", f"scale c must be positive and finite, got {self.c}")
        elif self.kind is DistributionKind.HEAVY:
            if not (0.0 < self.alpha < math.inf):
                raise SpecValidationError("rho", f"heavy tail exponent must be positive, got {self.alpha}")
        elif self.kind is DistributionKind.TABLE:
            self._validate_table()

    def _validate_table(self) -> None:
        if not self.values or len(self.values) != len(self.masses):
            raise SpecValidationError("rho", "table needs matching, nonempty values and masses")
        if any(int(v) != v or v < 1 for v in self.values):
            raise SpecValidationError("rho", f"table values must be integers >= 1, got {self.values}")
        if len(set(self.values)) != len(self.values) or list(self.values) != sorted(self.values):
            raise SpecValidationError("rho", "table values must be distinct and ascending")
        if any(m <= 0 for m in self.masses):
            raise SpecValidationError("rho", "table masses must be positive")
        if abs(sum(self.masses) - 1.0) > MASS_TOLERANCE:
            raise SpecValidationError("rho", f"table masses must sum to 1, got {sum(self.masses)!r}")

    @property
    def is_integer_valued(self) -> bool:
        """True when the law is supported on the positive integers (rho = inf allowed for point masses)."""
        if self.kind in (DistributionKind.TABLE, DistributionKind.DISCRETE_PARETO):
            return True
        if self.kind is DistributionKind.DEGENERATE:
            return math.isinf(self.value) or (float(self.value).is_integer() and self.value >= 1)
        return False

    def describe(self) -> str:
        if self.kind is DistributionKind.DEGENERATE:
            return f"degenerate({self.value})"
        if self.kind is DistributionKind.UNIFORM:
            return f"uniform(lo={self.lo}, hi={self.hi})"
        if self.kind is DistributionKind.PARETO:
            return f"pareto(c={self.c})"
        if self.kind is DistributionKind.DISCRETE_PARETO:
            return f"discrete_pareto(c={self.c})"
        if self.kind is DistributionKind.HEAVY:
            return f"heavy(alpha={self.alpha})"
        pairs = ", ".join(f"{v}:{m}" for v, m in zip(self.values, self.masses))
        return f"table({pairs})"


def degenerate(value: float) -> RadiusDistribution:
    return RadiusDistribution(DistributionKind.DEGENERATE, value=float(value))


def uniform(lo: float, hi: float) -> RadiusDistribution:
    return RadiusDistribution(DistributionKind.UNIFORM, lo=float(lo), hi=float(hi))


def pareto(c: float) -> RadiusDistribution:
    return RadiusDistribution(DistributionKind.PARETO, c=float(c))


def discrete_pareto(c: float) -> RadiusDistribution:
    return RadiusDistribution(DistributionKind.DISCRETE_PARETO, c=float(c))


def heavy(alpha: float) -> RadiusDistribution:
    return RadiusDistribution(DistributionKind.HEAVY, alpha=float(alpha))


def table(masses: Dict[int, float]) -> RadiusDistribution:
    items = sorted(masses.items())
    return RadiusDistribution(
        DistributionKind.TABLE,
        values=tuple(int(v) for v, _ in items),
        masses=tuple(float(m) for _, m in items),
    )


def require_integer_valued(dist: RadiusDistribution, field_name: str = "rho") -> None:
    """Reject continuous laws where the model needs positive-integer radii."""
    if not dist.is_integer_valued:
        raise SpecValidationError(field_name, f"{dist.describe()} is not supported on the positive integers")


def _tail_array(dist: RadiusDistribution, x: np.ndarray) -> np.ndarray:
    kind = dist.kind
    if kind is DistributionKind.DEGENERATE:
        return (x < dist.value).astype(float)
    if kind is DistributionKind.UNIFORM:
        return np.clip((dist.hi - x) / (dist.hi - dist.lo), 0.0, 1.0)
    if kind is DistributionKind.PARETO:
        with np.errstate(divide="ignore"):
            return np.where(x <= dist.c, 1.0, dist.c / np.maximum(x, dist.c))
    if kind is DistributionKind.DISCRETE_PARETO:
        j = np.floor(x)
        with np.errstate(divide="ignore"):
            return np.where(j < 1, 1.0, np.minimum(1.0, dist.c / np.maximum(j, 1.0)))
    if kind is DistributionKind.HEAVY:
        return np.where(x <= 1.0, 1.0, np.maximum(x, 1.0) ** (-dist.alpha))
    values = np.asarray(dist.values, dtype=float)
    masses = np.asarray(dist.masses, dtype=float)
    return (values[None, :] > x.reshape(-1, 1)).astype(float) @ masses


def _scalar_or_array(result: np.ndarray, like: ArrayLike) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(np.asarray(result).reshape(-1)[0])
    return result.reshape(np.shape(like))


def tail_probability(dist: RadiusDistribution, x: ArrayLike) -> ArrayLike:
    """
    G(x) = P(rho > x).

    Args:
        dist: Radius law
        x: Nonnegative point or array of points

    Returns:
        Tail probability with the same shape as x
    """
    arr = np.asarray(x, dtype=float).reshape(-1)
    if np.any(arr < 0):
        raise SpecValidationError("x", "tail probability is defined for x >= 0")
    return _scalar_or_array(_tail_array(dist, arr), x)


def cdf(dist: RadiusDistribution, x: ArrayLike) -> ArrayLike:
    """F(x) = 1 - G(x) = P(rho <= x)."""
    arr = np.asarray(x, dtype=float).reshape(-1)
    return _scalar_or_array(1.0 - _tail_array(dist, np.maximum(arr, 0.0)), x)


def at_least_probability(dist: RadiusDistribution, t: ArrayLike) -> ArrayLike:
    """
    P(rho >= t).

    For integer laws this is G(ceil(t) - 1); P(rho >= t) = 1 whenever t <= 0.
    """
    arr = np.asarray(t, dtype=float).reshape(-1)
    if dist.is_integer_valued:
        shifted = np.ceil(arr) - 1.0
        out = np.where(shifted < 0, 1.0, _tail_array(dist, np.maximum(shifted, 0.0)))
    elif dist.kind is DistributionKind.DEGENERATE:
        out = (arr <= dist.value).astype(float)
    else:
        # continuous laws without atoms
        out = np.where(arr <= 0, 1.0, _tail_array(dist, np.maximum(arr, 0.0)))
    return _scalar_or_array(out, t)


def d_moment(dist: RadiusDistribution, d: int) -> float:
    """
    E[rho^d], with math.inf standing for a divergent moment.

    Args:
        dist: Radius law
        d: Moment order, at least 1
    """
    if d < 1:
        raise SpecValidationError("d", f"moment order must be at least 1, got {d}")
    kind = dist.kind
    if kind is DistributionKind.DEGENERATE:
        return dist.value ** d
    if kind is DistributionKind.UNIFORM:
        return (dist.hi ** (d + 1) - dist.lo ** (d + 1)) / ((d + 1) * (dist.hi - dist.lo))
    if kind in (DistributionKind.PARETO, DistributionKind.DISCRETE_PARETO):
        return math.inf
    if kind is DistributionKind.HEAVY:
        return dist.alpha / (dist.alpha - d) if dist.alpha > d else math.inf
    return float(sum(m * v ** d for v, m in zip(dist.values, dist.masses)))


def tail_regime(dist: RadiusDistribution) -> TailRegime:
    """Exact liminf and limsup of x * G(x) for the built-in families."""
    kind = dist.kind
    if kind in (DistributionKind.PARETO, DistributionKind.DISCRETE_PARETO):
        return TailRegime(dist.c, dist.c)
    if kind is DistributionKind.HEAVY:
        if dist.alpha < 1.0:
            return TailRegime(math.inf, math.inf)
        if dist.alpha == 1.0:
            return TailRegime(1.0, 1.0)
        return TailRegime(0.0, 0.0)
    if kind is DistributionKind.DEGENERATE and math.isinf(dist.value):
        return TailRegime(math.inf, math.inf)
    return TailRegime(0.0, 0.0)


def support_max(dist: RadiusDistribution) -> float:
    """Largest possible radius, math.inf for unbounded laws."""
    if dist.kind is DistributionKind.DEGENERATE:
        return dist.value
    if dist.kind is DistributionKind.UNIFORM:
        return dist.hi
    if dist.kind is DistributionKind.TABLE:
        return float(dist.values[-1])
    return math.inf


def quantile(dist: RadiusDistribution, q: float) -> float:
    """Smallest x with F(x) >= q, for q in [0, 1)."""
    if not 0.0 <= q < 1.0:
        raise SpecValidationError("quantile", f"q must lie in [0, 1), got {q}")
    kind = dist.kind
    if kind is DistributionKind.DEGENERATE:
        return dist.value
    if kind is DistributionKind.UNIFORM:
        return dist.lo + q * (dist.hi - dist.lo)
    if kind is DistributionKind.PARETO:
        return dist.c / (1.0 - q)
    if kind is DistributionKind.DISCRETE_PARETO:
        return float(max(1, math.ceil(dist.c / (1.0 - q) - 1e-12)))
    if kind is DistributionKind.HEAVY:
        return (1.0 - q) ** (-1.0 / dist.alpha)
    cumulative = np.cumsum(dist.masses)
    idx = int(np.searchsorted(cumulative, q - MASS_TOLERANCE, side="left"))
    return float(dist.values[min(idx, len(dist.values) - 1)])


def inverse_tail(dist: RadiusDistribution, u: ArrayLike) -> ArrayLike:
    """
    Map u in (0, 1] to the radius rho with P(rho > x) = P(u <= G(x)).

    Args:
        dist: Radius law
        u: Uniform variate(s) in (0, 1]

    Returns:
        Radius value(s); a uniform u gives a draw from `dist`
    """
    arr = np.asarray(u, dtype=float).reshape(-1)
    kind = dist.kind
    if kind is DistributionKind.DEGENERATE:
        out = np.full(arr.shape, dist.value)
    elif kind is DistributionKind.UNIFORM:
        out = dist.hi - arr * (dist.hi - dist.lo)
    elif kind is DistributionKind.PARETO:
        out = dist.c / arr
    elif kind is DistributionKind.DISCRETE_PARETO:
        out = np.floor(dist.c / arr) + 1.0
    elif kind is DistributionKind.HEAVY:
        out = arr ** (-1.0 / dist.alpha)
    else:
        masses = np.asarray(dist.masses, dtype=float)
        # G at each support point, ascending once reversed
        tails_desc = 1.0 - np.cumsum(masses)
        tails_desc[-1] = 0.0
        at_or_above = len(masses) - np.searchsorted(tails_desc[::-1], arr, side="left")
        idx = np.clip(at_or_above, 0, len(masses) - 1)
        out = np.asarray(dist.values, dtype=float)[idx]
    return _scalar_or_array(out, u)


def sample_many(dist: RadiusDistribution, stream: np.random.Generator, size: int) -> np.ndarray:
    """Draw `size` i.i.d. radii by inverse CDF; always consumes `size` uniforms from the stream."""
    u = 1.0 - stream.random(size)
    return np.asarray(inverse_tail(dist, u), dtype=float).reshape(size)


def sample(dist: RadiusDistribution, stream: np.random.Generator) -> float:
    """Draw one radius."""
    return float(sample_many(dist, stream, 1)[0])


_LITERAL = re.compile(r"^\s*(?P<name>[a-z_]+)\s*\((?P<args>.*)\)\s*$")


def parse_distribution(literal: str) -> RadiusDistribution:
    """
    Parse a distribution literal such as `pareto(c=2)` or `table(1:0.3, 3:0.7)`.

    Raises:
        SpecValidationError: On unknown names or malformed arguments
    """
    match = _LITERAL.match(literal)
    if not match:
        raise SpecValidationError("rho", f"cannot parse distribution literal {literal!r}")
    name = match.group("name")
    raw_args = [a.strip() for a in match.group("args").split(",") if a.strip()]

    try:
        if name == "table":
            pairs = {}
            for item in raw_args:
                value, mass = item.split(":")
                pairs[int(value)] = float(mass)
            return table(pairs)

        positional = [float(a) for a in raw_args if "=" not in a]
        keyword = {k.strip(): float(v) for k, v in (a.split("=", 1) for a in raw_args if "=" in a)}
    except ValueError as exc:
        raise SpecValidationError("rho", f"bad arguments in {literal!r}: {exc}") from exc

    def arg(key: str, position: int) -> float:
        if key in keyword:
            return keyword[key]
        if position < len(positional):
            return positional[position]
        raise SpecValidationError("rho", f"{name} needs argument {key!r}")

    if name == "degenerate":
        return degenerate(arg("value", 0))
    if name == "uniform":
        return uniform(arg("lo", 0), arg("hi", 1))
    if name == "pareto":
        return pareto(arg("c", 0))
    if name == "discrete_pareto":
        return discrete_pareto(arg("c", 0))
    if name == "heavy":
        return heavy(arg("alpha", 0))
    raise SpecValidationError("rho", f"unknown distribution {name!r}")
