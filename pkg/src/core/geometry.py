"""
Exact and certified coverage predicates for unions of closed boxes, balls and intervals.

Shapes are closed. Boxes are decided exactly on the grid induced by all shape
boundaries (coordinate compression); balls are decided by certified adaptive
subdivision; intervals by an endpoint sweep. Every tolerance comparison goes
through GEOMETRY_EPSILON.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from src.utils.config import (
    BALL_CELL_BUDGET,
    DEFAULT_BALL_MAX_DEPTH,
    GEOMETRY_EPSILON,
    MAX_EXACT_DIMENSION,
    GeometryError,
)

logger = logging.getLogger(__name__)

Point = Tuple[float, ...]


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box corner + [0, sides]."""
    corner: Point
    sides: Point

    def __post_init__(self) -> None:
        if len(self.corner) != len(self.sides) or len(self.corner) == 0:
            raise GeometryError(f"corner and sides must share a positive dimension, got {self.corner}, {self.sides}")
        if any(not s > 0 for s in self.sides):
            raise GeometryError(f"box sides must be positive, got {self.sides}")

    @classmethod
    def cube(cls, corner: Sequence[float], side: float) -> "Box":
        return cls(tuple(float(x) for x in corner), tuple(float(side) for _ in corner))

    @classmethod
    def from_bounds(cls, lower: Sequence[float], upper: Sequence[float]) -> "Box":
        return cls(tuple(float(x) for x in lower), tuple(float(u) - float(l) for l, u in zip(lower, upper)))

    @property
    def dim(self) -> int:
        return len(self.corner)

    @property
    def upper(self) -> Point:
        return tuple(c + s for c, s in zip(self.corner, self.sides))

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, point: Sequence[float]) -> bool:
        return all(c <= x <= u for c, x, u in zip(self.corner, point, self.upper))


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball."""
    center: Point
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise GeometryError(f"ball radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, point: Sequence[float]) -> bool:
        return math.dist(self.center, point) <= self.radius


class CoverageStatus(Enum):
    COVERED = "covered"
    NOT_COVERED = "not-covered"
    UNKNOWN = "unknown-at-resolution"


@dataclass(frozen=True)
class CoverageVerdict:
    status: CoverageStatus
    witness: Optional[Point] = None

    @property
    def covered(self) -> bool:
        return self.status is CoverageStatus.COVERED


def boxes_to_bounds(shapes: Sequence[Box], d: int) -> Tuple[np.ndarray, np.ndarray]:
    """Stack boxes into (lower, upper) arrays of shape (n, d), checking dimensions."""
    for shape in shapes:
        if shape.dim != d:
            raise GeometryError(f"shape dimension {shape.dim} does not match target dimension {d}")
    if not shapes:
        return np.empty((0, d)), np.empty((0, d))
    lower = np.array([s.corner for s in shapes], dtype=float)
    return lower, lower + np.array([s.sides for s in shapes], dtype=float)


def _axis_coordinates(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Sorted breakpoints in [lo, hi], merging neighbours closer than GEOMETRY_EPSILON."""
    coords = np.unique(np.concatenate([[lo, hi], values[(values > lo) & (values < hi)]]))
    keep = np.concatenate([[True], np.diff(coords) > GEOMETRY_EPSILON])
    coords = coords[keep]
    if coords[-1] != hi:
        coords[-1] = hi
    return coords


def _snap(coords: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.searchsorted(coords, values + GEOMETRY_EPSILON, side="right") - 1


def _covered_cells(lower: np.ndarray, upper: np.ndarray, target_lo: np.ndarray, target_hi: np.ndarray):
    """
    Coverage counts on the compressed grid of the target.

    Returns:
        (axes, counts): breakpoints per axis and an integer array with one entry
        per open grid cell holding the number of boxes containing it
    """
    d = target_lo.size
    lo = np.maximum(lower, target_lo)
    hi = np.minimum(upper, target_hi)
    live = np.all(hi - lo > GEOMETRY_EPSILON, axis=1)
    lo, hi = lo[live], hi[live]

    axes = [_axis_coordinates(np.concatenate([lo[:, k], hi[:, k]]), target_lo[k], target_hi[k]) for k in range(d)]
    shape = tuple(len(a) - 1 for a in axes)
    diff = np.zeros(tuple(s + 1 for s in shape), dtype=np.int64)
    if lo.shape[0]:
        start = np.stack([_snap(axes[k], lo[:, k]) for k in range(d)], axis=1)
        stop = np.stack([_snap(axes[k], hi[:, k]) for k in range(d)], axis=1)
        # inclusion-exclusion over the 2^d corners of each index block
        for corner in itertools.product((0, 1), repeat=d):
            index = tuple(np.where(corner[k], stop[:, k], start[:, k]) for k in range(d))
            np.add.at(diff, index, (-1) ** sum(corner))
    counts = diff
    for k in range(d):
        counts = np.cumsum(counts, axis=k)
    return axes, counts[tuple(slice(0, s) for s in shape)]


def _target_bounds(target: Box) -> Tuple[np.ndarray, np.ndarray]:
    lo = np.asarray(target.corner, dtype=float)
    return lo, lo + np.asarray(target.sides, dtype=float)


def covers_bounds(lower: np.ndarray, upper: np.ndarray, target: Box) -> CoverageVerdict:
    """Array form of `union_covers_box`."""
    t_lo, t_hi = _target_bounds(target)
    axes, counts = _covered_cells(lower, upper, t_lo, t_hi)
    holes = np.argwhere(counts == 0)
    if holes.size == 0:
        return CoverageVerdict(CoverageStatus.COVERED)
    cell = holes[0]
    witness = tuple(float((axes[k][cell[k]] + axes[k][cell[k] + 1]) / 2.0) for k in range(len(axes)))
    return CoverageVerdict(CoverageStatus.NOT_COVERED, witness)


def vacancy_bounds(lower: np.ndarray, upper: np.ndarray, window: Box) -> float:
    """Array form of `vacancy_measure_boxes`."""
    t_lo, t_hi = _target_bounds(window)
    axes, counts = _covered_cells(lower, upper, t_lo, t_hi)
    widths = np.diff(axes[0])
    volumes = widths
    for k in range(1, len(axes)):
        volumes = np.multiply.outer(volumes, np.diff(axes[k]))
    return float(volumes[counts == 0].sum())


def _check_exact_dimension(d: int) -> None:
    if d > MAX_EXACT_DIMENSION:
        raise GeometryError(
            f"exact grid methods support d <= {MAX_EXACT_DIMENSION}, got d={d}; use vacancy_fraction_probes"
        )


def union_covers_box(shapes: Sequence[Box], target: Box) -> CoverageVerdict:
    """
    Decide exactly whether the union of closed boxes covers the closed target box.

    Args:
        shapes: Boxes sharing the target's dimension
        target: Box to cover

    Returns:
        CoverageVerdict; never unknown. A not-covered witness lies outside every shape.

    Raises:
        GeometryError: On dimension mismatch
    """
    lower, upper = boxes_to_bounds(shapes, target.dim)
    if target.dim > MAX_EXACT_DIMENSION:
        return _probe_witness_search(lower, upper, target)
    return covers_bounds(lower, upper, target)


def vacancy_measure_boxes(shapes: Sequence[Box], window: Box) -> float:
    """
    Lebesgue measure of the part of `window` outside every box.

    Raises:
        GeometryError: On dimension mismatch or d above the exact-method cap
    """
    lower, upper = boxes_to_bounds(shapes, window.dim)
    _check_exact_dimension(window.dim)
    return vacancy_bounds(lower, upper, window)


def covered_mask_boxes(lower: np.ndarray, upper: np.ndarray, points: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Boolean mask of points lying in at least one closed box."""
    mask = np.zeros(points.shape[0], dtype=bool)
    for start in range(0, lower.shape[0], chunk):
        lo = lower[start:start + chunk]
        hi = upper[start:start + chunk]
        inside = np.all((points[:, None, :] >= lo[None]) & (points[:, None, :] <= hi[None]), axis=2)
        mask |= inside.any(axis=1)
    return mask


def covered_mask_balls(centers: np.ndarray, radii: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Boolean mask of points lying in at least one closed ball."""
    mask = np.zeros(points.shape[0], dtype=bool)
    if centers.shape[0] == 0 or points.shape[0] == 0:
        return mask
    tree = cKDTree(points)
    for hits in tree.query_ball_point(centers, r=radii):
        mask[hits] = True
    return mask


def vacancy_fraction_probes(shapes: Sequence, window: Box, probes: np.ndarray) -> float:
    """
    Monte Carlo vacancy estimate: the fraction of probe points outside every shape.

    Args:
        shapes: Boxes or balls
        window: Window the probes were drawn in (dimension check only)
        probes: (k, d) array of points

    Returns:
        Fraction of uncovered probes; an estimate, not an exact measure
    """
    if probes.ndim != 2 or probes.shape[1] != window.dim:
        raise GeometryError(f"probes must have shape (k, {window.dim})")
    if not shapes:
        return 1.0
    if all(isinstance(s, Ball) for s in shapes):
        centers = np.array([s.center for s in shapes], dtype=float)
        radii = np.array([s.radius for s in shapes], dtype=float)
        covered = covered_mask_balls(centers, radii, probes)
    else:
        lower, upper = boxes_to_bounds(shapes, window.dim)
        covered = covered_mask_boxes(lower, upper, probes)
    return float(1.0 - covered.mean())


def _probe_witness_search(lower: np.ndarray, upper: np.ndarray, target: Box, probes: int = 100_000) -> CoverageVerdict:
    t_lo, t_hi = _target_bounds(target)
    stream = np.random.default_rng(0)
    points = t_lo + stream.random((probes, target.dim)) * (t_hi - t_lo)
    uncovered = ~covered_mask_boxes(lower, upper, points)
    logger.warning(f"d={target.dim} exceeds the exact grid cap; coverage checked with {probes} probes")
    if uncovered.any():
        return CoverageVerdict(CoverageStatus.NOT_COVERED, tuple(float(x) for x in points[np.argmax(uncovered)]))
    return CoverageVerdict(CoverageStatus.UNKNOWN)


def union_covers_box_balls(
    shapes: Sequence[Ball],
    target: Box,
    max_depth: int = DEFAULT_BALL_MAX_DEPTH,
) -> CoverageVerdict:
    """
    Certified coverage test for a union of closed balls over a closed box.

    A cell is covered when its farthest corner from some ball centre lies within
    that ball; a cell centre outside every ball is a vacancy witness. Other cells
    are split in half along every axis until `max_depth`.

    Args:
        shapes: Balls sharing the target's dimension
        target: Box to cover
        max_depth: Subdivision depth, at least 1

    Returns:
        CoverageVerdict; unknown-at-resolution when depth or the cell budget runs out
    """
    if max_depth < 1:
        raise GeometryError(f"max_depth must be at least 1, got {max_depth}")
    d = target.dim
    for shape in shapes:
        if shape.dim != d:
            raise GeometryError(f"ball dimension {shape.dim} does not match target dimension {d}")

    centers = np.array([s.center for s in shapes], dtype=float).reshape(-1, d)
    radii = np.array([s.radius for s in shapes], dtype=float)
    t_lo, t_hi = _target_bounds(target)

    offsets = np.array(list(itertools.product((0, 1), repeat=d)), dtype=float)
    frontier: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = [(t_lo, t_hi, np.arange(len(shapes)))]
    visited = 0
    unresolved = False

    for depth in range(max_depth + 1):
        next_frontier = []
        for lo, hi, candidates in frontier:
            visited += 1
            mid = (lo + hi) / 2.0
            c = centers[candidates]
            r = radii[candidates]
            far = np.maximum(np.abs(c - lo), np.abs(c - hi))
            if np.any(np.sqrt((far ** 2).sum(axis=1)) <= r):
                continue
            if not np.any(np.sqrt(((c - mid) ** 2).sum(axis=1)) <= r):
                return CoverageVerdict(CoverageStatus.NOT_COVERED, tuple(float(x) for x in mid))
            if depth == max_depth or visited >= BALL_CELL_BUDGET:
                unresolved = True
                continue
            # keep only balls that reach the cell
            near = np.clip(c, lo, hi)
            reach = np.sqrt(((c - near) ** 2).sum(axis=1)) <= r
            kept = candidates[reach]
            half = (hi - lo) / 2.0
            for offset in offsets:
                child_lo = lo + offset * half
                next_frontier.append((child_lo, child_lo + half, kept))
        frontier = next_frontier
        if not frontier:
            break

    if unresolved:
        logger.warning(f"Ball coverage unresolved at depth {max_depth} after {visited} cells")
        return CoverageVerdict(CoverageStatus.UNKNOWN)
    return CoverageVerdict(CoverageStatus.COVERED)


def uncovered_interval_gaps(
    intervals: Sequence[Tuple[float, float]],
    target: Tuple[float, float],
) -> List[Tuple[float, float]]:
    """
    Maximal open subintervals of the closed target not met by any closed interval.

    Args:
        intervals: (lo, hi) pairs with lo < hi
        target: (lo, hi) with lo < hi

    Returns:
        Sorted gaps; abutting intervals leave no gap
    """
    t_lo, t_hi = float(target[0]), float(target[1])
    if not t_lo < t_hi:
        raise GeometryError(f"target must satisfy lo < hi, got {target}")
    arr = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise GeometryError("every interval must satisfy lo < hi")
    return gaps_from_arrays(arr[:, 0], arr[:, 1], t_lo, t_hi)


def gaps_from_arrays(lo: np.ndarray, hi: np.ndarray, t_lo: float, t_hi: float) -> List[Tuple[float, float]]:
    """Sweep over intervals sorted by left endpoint, tracking the running right reach."""
    a = np.maximum(lo, t_lo)
    b = np.minimum(hi, t_hi)
    live = b >= a
    a, b = a[live], b[live]
    if a.size == 0:
        return [(t_lo, t_hi)]
    order = np.argsort(a, kind="stable")
    a, b = a[order], b[order]
    reach = np.maximum.accumulate(b)
    previous = np.concatenate([[t_lo], reach[:-1]])
    opens = a > previous + GEOMETRY_EPSILON
    gaps = list(zip(previous[opens].tolist(), a[opens].tolist()))
    if reach[-1] < t_hi - GEOMETRY_EPSILON:
        gaps.append((float(reach[-1]), t_hi))
    return gaps
