"""
Tests for the stationary Poisson Boolean model, its coverage verdicts and the scaled-radius ball model.
"""
import math

import numpy as np
import pytest

from src.core.continuum_models import (
    PoissonBooleanSpec,
    ScaledRadiusSpec,
    ShapeKind,
    complete_coverage_verdict,
    configuration_vacancy,
    coverage_profile,
    estimate_full_coverage_probability,
    estimate_vacancy_expectation,
    eventual_coverage_regime,
    eventual_coverage_regime_1d,
    h0,
    sampling_margin,
    scaled_radius,
    scaled_radius_verdict,
    simulate_configuration,
    thin_configuration,
    vacancy_expectation_exact,
)
from src.core.distributions import degenerate, heavy, pareto, uniform
from src.core.geometry import Box
from src.core.verdicts import CoverageOutcome
from src.utils.config import SpecValidationError
from src.utils.stats import split_stream


class TestSpecValidation:

    def test_defaults_to_unit_window(self):
        spec = PoissonBooleanSpec(1.0, 3, degenerate(1))
        assert spec.window == Box.cube((0, 0, 0), 1)

    @pytest.mark.parametrize("kwargs, field", [
        ({"intensity": 0.0, "dimension": 1}, "intensity"),
        ({"intensity": 1.0, "dimension": 0}, "dimension"),
        ({"intensity": 1.0, "dimension": 2, "window": Box.cube((0,), 1)}, "window"),
    ])
    def test_invalid(self, kwargs, field):
        with pytest.raises(SpecValidationError) as info:
            PoissonBooleanSpec(rho=degenerate(1), **kwargs)
        assert info.value.field == field

    def test_scaled_needs_balls(self):
        with pytest.raises(SpecValidationError):
            ScaledRadiusSpec(PoissonBooleanSpec(1.0, 2, degenerate(1)), 1.0)


class TestSimulation:

    def test_empty_configuration(self):
        spec = PoissonBooleanSpec(1e-12, 2, degenerate(0.5))
        config = simulate_configuration(spec, split_stream(0, 0))
        assert config.size == 0
        assert configuration_vacancy(config) == pytest.approx(1.0)

    def test_point_mass_margin(self):
        assert sampling_margin(PoissonBooleanSpec(1.0, 1, degenerate(0.5))) == (0.5, False)

    def test_unbounded_margin_truncates(self):
        margin, truncated = sampling_margin(PoissonBooleanSpec(1.0, 1, pareto(1)))
        assert truncated
        assert margin == pytest.approx(10.0)

    def test_replay_identical(self):
        spec = PoissonBooleanSpec(5.0, 2, uniform(0, 0.5))
        first = simulate_configuration(spec, split_stream(11, 4))
        second = simulate_configuration(spec, split_stream(11, 4))
        assert np.array_equal(first.anchors, second.anchors)
        assert np.array_equal(first.radii, second.radii)

    def test_shapes_meet_window(self):
        spec = PoissonBooleanSpec(20.0, 2, uniform(0.1, 0.4))
        config = simulate_configuration(spec, split_stream(3, 0))
        lower, upper = config.bounds()
        assert np.all(upper >= 0.0) and np.all(lower <= 1.0)

    def test_thinning_never_adds_coverage(self):
        spec = PoissonBooleanSpec(3.0, 2, uniform(0.1, 0.5))
        config = simulate_configuration(spec, split_stream(5, 0))
        thinned = thin_configuration(config, 0.5, split_stream(5, 1))
        assert thinned.size <= config.size
        assert configuration_vacancy(thinned) >= configuration_vacancy(config) - 1e-12


class TestVacancyExpectation:

    def test_exact_values(self):
        assert vacancy_expectation_exact(PoissonBooleanSpec(1.0, 2, degenerate(0.5))) == pytest.approx(0.778801, abs=1e-6)
        assert vacancy_expectation_exact(PoissonBooleanSpec(1.0, 1, degenerate(1))) == pytest.approx(0.367879, abs=1e-6)
        assert vacancy_expectation_exact(PoissonBooleanSpec(3.0, 2, pareto(1))) == 0.0

    @pytest.mark.slow
    @pytest.mark.parametrize("dimension, radius, target", [(1, 1.0, 0.367879), (2, 0.5, 0.778801)])
    def test_monte_carlo_within_four_se(self, dimension, radius, target):
        spec = PoissonBooleanSpec(1.0, dimension, degenerate(radius))
        result = estimate_vacancy_expectation(spec, 10_000, seed=42)
        assert abs(result.estimate - target) < 4 * result.standard_error, (
            f"estimate {result.estimate} vs {target}, se {result.standard_error}"
        )
        assert result.details["exact"] == pytest.approx(target, abs=1e-6)
        assert len(result.rows) == 10_000

    def test_vanishing_intensity(self):
        result = estimate_vacancy_expectation(PoissonBooleanSpec(1e-9, 2, degenerate(0.5)), 100, seed=1)
        assert result.estimate == pytest.approx(1.0)

    def test_ball_vacancy(self):
        spec = PoissonBooleanSpec(1.0, 2, degenerate(0.3), shape=ShapeKind.BALL)
        result = estimate_vacancy_expectation(spec, 1000, seed=8)
        target = math.exp(-math.pi * 0.09)
        assert result.details["method"] == "probes"
        assert abs(result.estimate - target) < 4 * result.standard_error + 0.01


class TestFullCoverage:

    def test_dense_long_intervals(self):
        result = estimate_full_coverage_probability(PoissonBooleanSpec(50.0, 1, degenerate(2)), 200, seed=3)
        assert result.estimate > 0.99

    def test_sparse(self):
        result = estimate_full_coverage_probability(PoissonBooleanSpec(1e-6, 1, degenerate(1)), 200, seed=3)
        assert result.estimate == 0.0
        assert result.interval[0] == 0.0

    def test_interval_excludes_one(self):
        result = estimate_full_coverage_probability(PoissonBooleanSpec(1.0, 2, degenerate(0.5)), 200, seed=4)
        assert result.interval[1] < 1.0

    def test_balls(self):
        spec = PoissonBooleanSpec(30.0, 2, degenerate(0.6), shape=ShapeKind.BALL)
        result = estimate_full_coverage_probability(spec, 20, seed=5)
        assert 0.0 <= result.estimate <= 1.0
        assert all(row["status"] in ("covered", "not-covered", "unknown-at-resolution") for row in result.rows)


class TestRegimes:

    def test_complete_coverage(self):
        assert complete_coverage_verdict(PoissonBooleanSpec(0.1, 2, pareto(1))).outcome is CoverageOutcome.COVERS
        assert complete_coverage_verdict(PoissonBooleanSpec(5.0, 2, degenerate(1))).outcome is CoverageOutcome.DOES_NOT_COVER

    def test_half_line_threshold(self):
        assert eventual_coverage_regime_1d(pareto(2), 1.0).outcome is CoverageOutcome.COVERS
        assert eventual_coverage_regime_1d(pareto(2), 0.3).outcome is CoverageOutcome.DOES_NOT_COVER
        assert eventual_coverage_regime_1d(uniform(0, 5), 100.0).outcome is CoverageOutcome.DOES_NOT_COVER
        assert eventual_coverage_regime_1d(heavy(0.5), 1e-3).outcome is CoverageOutcome.COVERS

    def test_orthant_ignores_intensity(self):
        assert eventual_coverage_regime(pareto(0.1), 2, 1e-3).outcome is CoverageOutcome.COVERS
        assert eventual_coverage_regime(uniform(0, 5), 3, 100.0).outcome is CoverageOutcome.DOES_NOT_COVER


class TestScaledRadius:

    def test_h0_values(self):
        assert h0(math.e, 1.0, 2) == pytest.approx(0.797885, abs=1e-6)
        assert h0(math.e, 2.0, 2) == pytest.approx(0.564190, abs=1e-6)
        assert h0(math.e, 1.0, 1) == pytest.approx(0.5)

    def test_h0_domain(self):
        with pytest.raises(SpecValidationError):
            h0(2.0, 1.0, 2)

    def test_inner_clamp(self):
        spec = ScaledRadiusSpec(PoissonBooleanSpec(1.0, 2, degenerate(1), shape=ShapeKind.BALL), 4.0)
        assert scaled_radius(spec, 0.0) == pytest.approx(scaled_radius(spec, spec.inner_radius))
        assert scaled_radius(spec, 10.0) == pytest.approx(2.0 * h0(10.0, 1.0, 2))

    def test_verdicts(self):
        base = PoissonBooleanSpec(1.0, 2, degenerate(1), shape=ShapeKind.BALL)
        assert scaled_radius_verdict(ScaledRadiusSpec(base, 4.0)).outcome is CoverageOutcome.POSITIVE_PROBABILITY
        assert scaled_radius_verdict(ScaledRadiusSpec(base, 0.1)).outcome is CoverageOutcome.ZERO_PROBABILITY

    def test_supercritical_profile(self):
        base = PoissonBooleanSpec(1.0, 2, degenerate(1), shape=ShapeKind.BALL)
        result = coverage_profile(ScaledRadiusSpec(base, 4.0), [(10.0, 20.0)], 50, seed=6)
        assert result.estimate >= 0.99, f"covered fraction {result.estimate}"

    def test_subcritical_profile(self):
        base = PoissonBooleanSpec(1.0, 2, degenerate(1), shape=ShapeKind.BALL)
        result = coverage_profile(ScaledRadiusSpec(base, 0.1), [(10.0, 20.0)], 50, seed=6)
        assert result.estimate < 0.99
        assert result.details["c_times_moment"] == pytest.approx(0.1)

    def test_empty_profile(self):
        base = PoissonBooleanSpec(1e-12, 2, degenerate(1), shape=ShapeKind.BALL)
        result = coverage_profile(ScaledRadiusSpec(base, 1.0), [(3.0, 5.0), (5.0, 8.0)], 5, seed=1)
        assert result.estimate == 0.0
        assert [row["r_in"] for row in result.rows] == [3.0, 5.0]
