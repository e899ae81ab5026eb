"""
Tests for box, ball and interval coverage predicates.
"""
import numpy as np
import pytest

from src.core.geometry import (
    Ball,
    Box,
    CoverageStatus,
    covered_mask_balls,
    covered_mask_boxes,
    union_covers_box,
    union_covers_box_balls,
    uncovered_interval_gaps,
    vacancy_fraction_probes,
    vacancy_measure_boxes,
)
from src.utils.config import GeometryError


def square(lo, hi):
    return Box.from_bounds(lo, hi)


def random_box(rng):
    lower = rng.uniform(-0.6, 1.0, size=2)
    return Box.from_bounds(lower, lower + rng.uniform(0.4, 1.6, size=2))


def random_ball(rng):
    return Ball(tuple(rng.uniform(-0.2, 1.2, size=2)), float(rng.uniform(0.2, 0.9)))


class TestBoxCoverage:

    def test_identity(self):
        unit = Box.cube((0, 0), 1)
        assert union_covers_box([unit], unit).covered

    def test_exact_tiling(self):
        shapes = [square((0, 0), (1, 2)), square((1, 0), (2, 2))]
        assert union_covers_box(shapes, Box.cube((0, 0), 2)).covered

    def test_gap_witness_is_uncovered(self):
        shapes = [square((0, 0), (0.9, 0.9)), square((1.1, 1.1), (2, 2))]
        target = Box.cube((0, 0), 2)
        verdict = union_covers_box(shapes, target)
        assert verdict.status is CoverageStatus.NOT_COVERED
        assert target.contains(verdict.witness)
        assert not any(s.contains(verdict.witness) for s in shapes), f"witness {verdict.witness} is covered"

    def test_central_gap(self):
        """A hole strictly inside the target is found."""
        shapes = [square((0, 0), (2, 0.9)), square((0, 1.1), (2, 2)),
                  square((0, 0), (0.9, 2)), square((1.1, 0), (2, 2))]
        verdict = union_covers_box(shapes, Box.cube((0, 0), 2))
        assert verdict.status is CoverageStatus.NOT_COVERED
        assert all(0.9 < x < 1.1 for x in verdict.witness)

    def test_empty_union(self):
        assert union_covers_box([], Box.cube((0,), 1)).status is CoverageStatus.NOT_COVERED

    def test_dimension_mismatch(self):
        with pytest.raises(GeometryError):
            union_covers_box([Box.cube((0, 0, 0), 1)], Box.cube((0, 0), 1))

    def test_three_dimensional_tiling(self):
        shapes = [Box.cube(corner, 1) for corner in np.ndindex(2, 2, 2)]
        assert union_covers_box(shapes, Box.cube((0, 0, 0), 2)).covered
        assert not union_covers_box(shapes[:-1], Box.cube((0, 0, 0), 2)).covered

    def test_fuzzed_monotonicity_and_witnesses(self):
        """Adding a box never uncovers the target or raises vacancy; every witness re-tests as uncovered."""
        rng = np.random.default_rng(163)
        target = Box.cube((0, 0), 1)
        covered_seen = 0
        for trial in range(1000):
            shapes = [random_box(rng) for _ in range(int(rng.integers(1, 13)))]
            before = union_covers_box(shapes, target)
            grown = shapes + [random_box(rng)]
            after = union_covers_box(grown, target)
            for verdict, union in ((before, shapes), (after, grown)):
                if verdict.status is CoverageStatus.NOT_COVERED:
                    assert target.contains(verdict.witness)
                    assert not any(s.contains(verdict.witness) for s in union), f"trial {trial}: {verdict.witness}"
            if before.covered:
                covered_seen += 1
                assert after.covered, f"trial {trial}: adding a box uncovered the target"
            assert vacancy_measure_boxes(grown, target) <= vacancy_measure_boxes(shapes, target) + 1e-12
        assert covered_seen > 0


class TestVacancyMeasure:

    def test_empty(self):
        assert vacancy_measure_boxes([], Box.cube((0, 0), 1)) == pytest.approx(1.0)

    def test_half(self):
        assert vacancy_measure_boxes([square((0, 0), (1, 0.5))], Box.cube((0, 0), 1)) == pytest.approx(0.5)

    def test_inclusion_exclusion(self):
        shapes = [square((0, 0), (0.6, 0.6)), square((0.4, 0.4), (1, 1))]
        assert vacancy_measure_boxes(shapes, Box.cube((0, 0), 1)) == pytest.approx(0.32, abs=1e-12)

    def test_clipped_to_window(self):
        shapes = [square((-1, -1), (0.5, 3))]
        assert vacancy_measure_boxes(shapes, Box.cube((0, 0), 1)) == pytest.approx(0.5)

    def test_dimension_cap(self):
        with pytest.raises(GeometryError):
            vacancy_measure_boxes([], Box.cube((0,) * 5, 1))

    def test_matches_sampled_estimate(self):
        rng = np.random.default_rng(0)
        shapes = [Box.cube(tuple(rng.random(2)), 0.3) for _ in range(8)]
        window = Box.cube((0, 0), 1)
        exact = vacancy_measure_boxes(shapes, window)
        probes = np.random.default_rng(1).random((40_000, 2))
        estimate = vacancy_fraction_probes(shapes, window, probes)
        assert abs(exact - estimate) < 0.02


class TestBallCoverage:

    def test_containment(self):
        verdict = union_covers_box_balls([Ball((0.0, 0.0), 10.0)], Box.cube((-1, -1), 2))
        assert verdict.covered

    def test_no_shapes(self):
        assert union_covers_box_balls([], Box.cube((0, 0), 1)).status is CoverageStatus.NOT_COVERED

    def test_two_balls_gap(self):
        balls = [Ball((0.0, 0.0), 1.0), Ball((3.0, 0.0), 1.0)]
        target = Box.from_bounds((0, -0.1), (3, 0.1))
        verdict = union_covers_box_balls(balls, target)
        assert verdict.status is CoverageStatus.NOT_COVERED
        assert verdict.witness[0] == pytest.approx(1.5, abs=0.5)
        assert not any(b.contains(verdict.witness) for b in balls)

    def test_overlapping_balls_cover(self):
        balls = [Ball((x, y), 0.8) for x in (0.25, 0.75) for y in (0.25, 0.75)]
        assert union_covers_box_balls(balls, Box.cube((0, 0), 1)).covered

    def test_shallow_depth_unknown(self):
        """Tangent coverage cannot be certified at depth 1."""
        balls = [Ball((0.0, 0.5), 0.71), Ball((1.0, 0.5), 0.71)]
        verdict = union_covers_box_balls(balls, Box.cube((0, 0), 1), max_depth=1)
        assert verdict.status in (CoverageStatus.UNKNOWN, CoverageStatus.COVERED)

    def test_mask(self):
        points = np.array([[0.0, 0.0], [2.0, 0.0], [0.5, 0.5]])
        mask = covered_mask_balls(np.array([[0.0, 0.0]]), np.array([1.0]), points)
        assert mask.tolist() == [True, False, True]

    def test_box_mask(self):
        points = np.array([[0.5, 0.5], [1.0, 1.0], [1.5, 0.5]])
        mask = covered_mask_boxes(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]]), points)
        assert mask.tolist() == [True, True, False]

    def test_fuzzed_configurations_are_sound(self):
        """Witnesses lie outside every ball; covered verdicts hold on a point grid and after adding a ball."""
        rng = np.random.default_rng(165)
        target = Box.cube((0, 0), 1)
        grid = np.stack(np.meshgrid(np.linspace(0, 1, 41), np.linspace(0, 1, 41)), axis=-1).reshape(-1, 2)
        statuses = {status: 0 for status in CoverageStatus}
        for trial in range(1000):
            balls = [random_ball(rng) for _ in range(int(rng.integers(1, 11)))]
            verdict = union_covers_box_balls(balls, target, max_depth=8)
            statuses[verdict.status] += 1
            if verdict.status is CoverageStatus.NOT_COVERED:
                assert target.contains(verdict.witness)
                assert not any(b.contains(verdict.witness) for b in balls), f"trial {trial}: {verdict.witness}"
            elif verdict.covered:
                centers = np.array([b.center for b in balls])
                radii = np.array([b.radius for b in balls])
                assert covered_mask_balls(centers, radii, grid).all(), f"trial {trial}"
                grown = union_covers_box_balls(balls + [random_ball(rng)], target, max_depth=8)
                assert grown.status is not CoverageStatus.NOT_COVERED, f"trial {trial}"
        assert statuses[CoverageStatus.COVERED] > 0
        assert statuses[CoverageStatus.NOT_COVERED] > 0


class TestIntervalGaps:

    def test_covering_interval(self):
        assert uncovered_interval_gaps([(0, 2)], (0, 1)) == []

    def test_middle_gap(self):
        gaps = uncovered_interval_gaps([(0, 0.4), (0.6, 1)], (0, 1))
        assert len(gaps) == 1
        assert gaps[0] == pytest.approx((0.4, 0.6))

    def test_touching_endpoints_close(self):
        assert uncovered_interval_gaps([(0, 0.5), (0.5, 1)], (0, 1)) == []

    def test_edges_and_order(self):
        gaps = uncovered_interval_gaps([(0.7, 0.8), (0.2, 0.3), (0.25, 0.4)], (0, 1))
        assert gaps == [pytest.approx((0.0, 0.2)), pytest.approx((0.4, 0.7)), pytest.approx((0.8, 1.0))]

    def test_no_intervals(self):
        assert uncovered_interval_gaps([], (0, 1)) == [(0.0, 1.0)]

    def test_malformed(self):
        with pytest.raises(GeometryError):
            uncovered_interval_gaps([(1, 0)], (0, 1))
