"""
Reduction of the Poisson orthant model to coupled upper and lower lattice models.

Cell i is i + (0, 1]^d. A cell is green when it holds a Poisson point; with m the
largest radius among its points, the upper model gets rho_u = 2 + floor(m) and
the lower model rho_l = max(0, floor(m) - 1), both from the same m.

Pathwise chain checked by `sandwich_check`, for cells v of the window:

    lower covers v  =>  v + 1 in C  =>  C meets v + (0, 1]^d  =>  upper covers v

Green cells with floor(m) = 0 have a clamped rho_l = 0 that need not satisfy the
first implication; they are reported separately and left out of the lower cover.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from opentelemetry import trace

from src.core.continuum_models import Configuration, ShapeKind
from src.core.distributions import RadiusDistribution, at_least_probability, cdf, sample_many
from src.core.geometry import covered_mask_boxes
from src.utils.config import PMF_TAIL_TOLERANCE, SpecValidationError

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)


@dataclass(eq=False)
class LatticeConfiguration:
    """Green field and coupled radii on the cells {0..n-1}^d."""
    dimension: int
    extent: int
    green: np.ndarray
    max_radius: np.ndarray
    rho_upper: np.ndarray
    rho_lower: np.ndarray

    @property
    def clamped_lower(self) -> np.ndarray:
        """Green cells whose lower radius was clamped at 0 (floor(m) = 0)."""
        return self.green & (np.floor(np.where(self.green, self.max_radius, 0.0)) < 1)


@dataclass
class SandwichReport:
    ok: bool
    lower_cells: int
    far_corner_cells: int
    touched_cells: int
    upper_cells: int
    clamped_lower_cells: int
    violation: Optional[Dict[str, Any]] = None
    notes: List[str] = field(default_factory=list)


def cell_index(points: np.ndarray) -> np.ndarray:
    """Index of the half-open cell i + (0, 1]^d holding each point."""
    return np.maximum(np.ceil(points).astype(np.int64) - 1, 0)


def mark_lattice_boxes(starts: np.ndarray, stops: np.ndarray, extent: int, d: int) -> np.ndarray:
    """
    Boolean field on {0..extent-1}^d marking the union of inclusive index boxes [starts, stops].

    Uses a d-dimensional difference array, one cumulative sum per axis.
    """
    starts = np.clip(np.asarray(starts, dtype=np.int64).reshape(-1, d), 0, extent)
    stops = np.clip(np.asarray(stops, dtype=np.int64).reshape(-1, d) + 1, 0, extent)
    live = np.all(stops > starts, axis=1)
    starts, stops = starts[live], stops[live]
    diff = np.zeros((extent + 1,) * d, dtype=np.int64)
    for corner in np.ndindex(*(2,) * d):
        index = tuple(np.where(corner[k], stops[:, k], starts[:, k]) for k in range(d))
        np.add.at(diff, index, (-1) ** sum(corner))
    counts = diff
    for k in range(d):
        counts = np.cumsum(counts, axis=k)
    return counts[(slice(0, extent),) * d] > 0


def discretize(config: Configuration, extent: Optional[int] = None) -> LatticeConfiguration:
    """
    Green field and coupled radii of an orthant cube configuration.

    Args:
        config: Cube configuration simulated on the orthant window [0, n]^d
        extent: n; defaults to the window side

    Returns:
        LatticeConfiguration with rho_upper = 2 + floor(m), rho_lower = max(0, floor(m) - 1) on green cells
    """
    if config.shape is not ShapeKind.CUBE:
        raise SpecValidationError("shape", "discretization is defined for cube configurations")
    d = config.window.dim
    n = int(extent if extent is not None else round(config.window.sides[0]))
    if n < 1:
        raise SpecValidationError("extent", f"must be at least 1, got {n}")

    inside = np.all((config.anchors > 0) & (config.anchors <= n), axis=1)
    idx = cell_index(config.anchors[inside])
    radii = config.radii[inside]

    max_radius = np.full((n,) * d, -np.inf)
    if idx.shape[0]:
        np.maximum.at(max_radius, tuple(idx.T), radii)
    green = np.isfinite(max_radius)
    floor_m = np.floor(np.where(green, max_radius, 0.0)).astype(np.int64)
    rho_upper = np.where(green, 2 + floor_m, 0)
    rho_lower = np.where(green, np.maximum(0, floor_m - 1), 0)
    return LatticeConfiguration(d, n, green, max_radius, rho_upper, rho_lower)


def lattice_rows(lattice: LatticeConfiguration) -> List[Dict[str, Any]]:
    """Grid dump rows (cell, green, rho_u, rho_l) in C order."""
    rows = []
    for cell in np.ndindex(*lattice.green.shape):
        green = bool(lattice.green[cell])
        rows.append({
            "cell": ":".join(str(c) for c in cell),
            "green": int(green),
            "rho_u": int(lattice.rho_upper[cell]) if green else "",
            "rho_l": int(lattice.rho_lower[cell]) if green else "",
        })
    return rows


def _expm1_ratio(intensity: float, probability: np.ndarray) -> np.ndarray:
    return np.expm1(intensity * probability) / np.expm1(intensity)


def max_radius_cdf(rho: RadiusDistribution, intensity: float, m: float) -> float:
    """
    P(max(rho_1..rho_N) <= m | N >= 1) for N ~ Poisson(intensity).

    Equals (exp(intensity F(m)) - 1) / (exp(intensity) - 1).
    """
    if m < 0:
        raise SpecValidationError("m", f"must be nonnegative, got {m}")
    if not intensity > 0:
        raise SpecValidationError("intensity", f"must be positive, got {intensity}")
    return float(_expm1_ratio(intensity, np.asarray(cdf(rho, float(m)))))


def _floor_max_cdf(rho: RadiusDistribution, intensity: float, j: np.ndarray) -> np.ndarray:
    """P(floor(max rho) <= j) = P(max rho < j + 1), zero for j < 0."""
    below = 1.0 - np.asarray(at_least_probability(rho, j + 1.0), dtype=float)
    return np.where(j < 0, 0.0, _expm1_ratio(intensity, below))


def _floor_max_pmf(rho: RadiusDistribution, intensity: float, j: int) -> float:
    previous, current = _floor_max_cdf(rho, intensity, np.array([j - 1.0, float(j)]))
    return float(current - previous)


def rho_u_pmf(rho: RadiusDistribution, intensity: float, k: int) -> float:
    """P(rho_u = k), rho_u = 2 + floor(max rho)."""
    if k < 2:
        return 0.0
    return _floor_max_pmf(rho, intensity, k - 2)


def rho_l_pmf(rho: RadiusDistribution, intensity: float, k: int) -> float:
    """P(rho_l = k), rho_l = max(0, floor(max rho) - 1)."""
    if k < 0:
        return 0.0
    if k == 0:
        return float(_floor_max_cdf(rho, intensity, np.array([1.0]))[0])
    return _floor_max_pmf(rho, intensity, k + 1)


def sample_rho_u(rho: RadiusDistribution, intensity: float, stream: np.random.Generator, size: int) -> np.ndarray:
    """Direct simulation of rho_u: zero-truncated Poisson count, then 2 + floor of the largest radius."""
    counts = stream.poisson(intensity, size)
    empty = counts == 0
    while empty.any():
        counts[empty] = stream.poisson(intensity, int(empty.sum()))
        empty = counts == 0
    radii = sample_many(rho, stream, int(counts.sum()))
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return 2 + np.floor(np.maximum.reduceat(radii, offsets)).astype(np.int64)


def _touched_cells(config: Configuration, n: int, d: int) -> np.ndarray:
    anchors = config.anchors
    tops = anchors + config.radii[:, None]
    starts = np.ceil(anchors - 1.0).astype(np.int64)
    stops = np.ceil(tops).astype(np.int64) - 1
    return mark_lattice_boxes(starts, stops, n, d)


def _first_violation(smaller: np.ndarray, larger: np.ndarray, stage: str) -> Optional[Dict[str, Any]]:
    bad = np.argwhere(smaller & ~larger)
    if bad.size == 0:
        return None
    return {"stage": stage, "cell": tuple(int(c) for c in bad[0])}


def sandwich_check(config: Configuration, lattice: Optional[LatticeConfiguration] = None) -> SandwichReport:
    """
    Verify the lower/Poisson/upper coverage chain on one orthant realization.

    Args:
        config: Orthant cube configuration
        lattice: Its discretization; computed when omitted

    Returns:
        SandwichReport; `violation` names the first failing cell and stage
    """
    with tracer.start_as_current_span("sandwich_check") as span:
        lattice = lattice if lattice is not None else discretize(config)
        d, n = lattice.dimension, lattice.extent
        span.set_attribute("n_shapes", config.size)

        cells = np.argwhere(lattice.green)
        clamped = lattice.clamped_lower
        usable = ~clamped[tuple(cells.T)] if cells.size else np.zeros(0, dtype=bool)
        lower_cells = cells[usable]
        lower = mark_lattice_boxes(
            lower_cells, lower_cells + lattice.rho_lower[tuple(lower_cells.T)][:, None], n, d
        )
        upper = mark_lattice_boxes(cells, cells + lattice.rho_upper[tuple(cells.T)][:, None], n, d)

        grid = np.stack(np.meshgrid(*[np.arange(n)] * d, indexing="ij"), axis=-1).reshape(-1, d)
        lo, hi = config.bounds()
        far = covered_mask_boxes(lo, hi, grid + 1.0).reshape((n,) * d)
        touched = _touched_cells(config, n, d)

        violation = (
            _first_violation(lower, far, "lower-in-poisson")
            or _first_violation(far, touched, "poisson-in-touched")
            or _first_violation(touched, upper, "touched-in-upper")
        )
        if violation:
            logger.error(f"Sandwich violated at {violation}")
        return SandwichReport(
            ok=violation is None,
            lower_cells=int(lower.sum()),
            far_corner_cells=int(far.sum()),
            touched_cells=int(touched.sum()),
            upper_cells=int(upper.sum()),
            clamped_lower_cells=int(clamped.sum()),
            violation=violation,
        )


def green_fraction(lattice: LatticeConfiguration) -> float:
    return float(lattice.green.mean())


def rho_u_support(
    rho: RadiusDistribution,
    intensity: float,
    tolerance: float = PMF_TAIL_TOLERANCE,
    max_k: int = 100_000,
) -> Tuple[np.ndarray, np.ndarray]:
    """Support points and pmf of rho_u, cut once the remaining mass is below `tolerance` or at `max_k`."""
    j = np.arange(-1, max_k - 1, dtype=float)
    masses = np.diff(_floor_max_cdf(rho, intensity, j))
    ks = np.arange(2, max_k + 1)[: masses.size]
    cut = int(np.searchsorted(np.cumsum(masses), 1.0 - tolerance, side="left")) + 1
    return ks[:cut], masses[:cut]
