"""
Tests for radius laws: tails, moments, tail regimes, sampling and the literal parser.
"""
import math

import numpy as np
import pytest

from src.core.distributions import (
    DistributionKind,
    at_least_probability,
    cdf,
    d_moment,
    degenerate,
    discrete_pareto,
    heavy,
    inverse_tail,
    parse_distribution,
    pareto,
    quantile,
    require_integer_valued,
    sample,
    sample_many,
    support_max,
    table,
    tail_probability,
    tail_regime,
    uniform,
)
from src.utils.config import SpecValidationError
from src.utils.stats import split_stream


class TestTailProbability:
    """G(x) = P(rho > x)."""

    def test_pareto_tail(self):
        assert tail_probability(pareto(2), 4.0) == pytest.approx(0.5)

    def test_degenerate_below_atom(self):
        assert tail_probability(degenerate(1), 0.5) == 1.0

    def test_table_mass_above(self):
        assert tail_probability(table({1: 0.3, 3: 0.7}), 2.0) == pytest.approx(0.7)

    def test_array_shape_preserved(self):
        x = np.array([[0.5, 1.0], [2.0, 8.0]])
        out = tail_probability(pareto(1), x)
        assert out.shape == x.shape
        assert out[1, 1] == pytest.approx(1.0 / 8.0)

    def test_negative_argument_rejected(self):
        with pytest.raises(SpecValidationError):
            tail_probability(pareto(1), -1.0)

    def test_cdf_complements_tail(self):
        dist = uniform(0, 2)
        for x in (0.0, 0.5, 1.7, 3.0):
            assert cdf(dist, x) + tail_probability(dist, x) == pytest.approx(1.0)

    def test_at_least_for_integer_law(self):
        """P(rho >= t) = G(ceil(t) - 1) for integer laws."""
        dist = discrete_pareto(2)
        assert at_least_probability(dist, 4.0) == pytest.approx(2.0 / 3.0)
        assert at_least_probability(dist, 0.0) == 1.0
        assert at_least_probability(table({1: 0.5, 2: 0.5}), 2.0) == pytest.approx(0.5)

    def test_at_least_for_point_mass(self):
        assert at_least_probability(degenerate(1.5), 1.5) == 1.0
        assert at_least_probability(degenerate(1.5), 1.6) == 0.0


class TestMoments:

    def test_degenerate(self):
        assert d_moment(degenerate(0.5), 2) == pytest.approx(0.25)

    def test_pareto_diverges(self):
        assert math.isinf(d_moment(pareto(1), 1))

    def test_table(self):
        assert d_moment(table({1: 0.5, 2: 0.5}), 2) == pytest.approx(2.5)

    def test_heavy_finite_above_order(self):
        assert d_moment(heavy(3), 2) == pytest.approx(3.0)
        assert math.isinf(d_moment(heavy(2), 2))

    def test_uniform(self):
        assert d_moment(uniform(0, 1), 2) == pytest.approx(1.0 / 3.0)


class TestTailRegime:

    def test_pareto(self):
        assert tail_regime(pareto(2)) == (2.0, 2.0)

    def test_bounded(self):
        assert tail_regime(uniform(0, 1)) == (0.0, 0.0)

    def test_heavy(self):
        regime = tail_regime(heavy(0.5))
        assert math.isinf(regime.liminf) and math.isinf(regime.limsup)


class TestSampling:

    def test_degenerate_draw(self):
        assert sample(degenerate(3), split_stream(1, 0)) == 3.0

    def test_pareto_inverse(self):
        assert inverse_tail(pareto(1), 0.25) == pytest.approx(4.0)

    def test_single_atom_table(self):
        draws = sample_many(table({1: 1.0}), split_stream(2, 0), 100)
        assert np.all(draws == 1.0)

    def test_table_frequencies(self):
        draws = sample_many(table({1: 0.3, 3: 0.7}), split_stream(3, 0), 100_000)
        freq = float(np.mean(draws == 3.0))
        se = math.sqrt(0.7 * 0.3 / draws.size)
        assert abs(freq - 0.7) < 4 * se, f"frequency of 3 is {freq}"
        assert set(np.unique(draws)) == {1.0, 3.0}

    def test_discrete_pareto_tail_matches(self):
        draws = sample_many(discrete_pareto(2), split_stream(4, 0), 100_000)
        assert draws.min() >= 3.0
        for x in (3.0, 5.0, 9.0):
            expected = tail_probability(discrete_pareto(2), x)
            freq = float(np.mean(draws > x))
            se = math.sqrt(expected * (1 - expected) / draws.size)
            assert abs(freq - expected) < 4 * se + 1e-12, f"P(rho > {x}): {freq} vs {expected}"

    def test_pareto_tail_empirical(self):
        draws = sample_many(pareto(2), split_stream(5, 0), 50_000)
        freq = float(np.mean(draws > 4.0))
        assert abs(freq - 0.5) < 4 * math.sqrt(0.25 / draws.size)

    def test_replay_identical(self):
        first = sample_many(heavy(0.7), split_stream(9, 3), 1000)
        second = sample_many(heavy(0.7), split_stream(9, 3), 1000)
        assert np.array_equal(first, second)


class TestSupportAndQuantiles:

    def test_point_mass_quantile(self):
        assert quantile(degenerate(0.5), 0.999) == 0.5

    def test_pareto_quantile(self):
        assert quantile(pareto(2), 0.5) == pytest.approx(4.0)

    def test_support(self):
        assert support_max(uniform(0, 3)) == 3.0
        assert support_max(table({1: 0.5, 4: 0.5})) == 4.0
        assert math.isinf(support_max(pareto(1)))


class TestValidation:

    @pytest.mark.parametrize("build", [
        lambda: degenerate(0),
        lambda: uniform(1, 0),
        lambda: pareto(-1),
        lambda: heavy(0),
        lambda: table({1: 0.5, 2: 0.4}),
        lambda: table({0: 1.0}),
    ])
    def test_invalid_parameters(self, build):
        with pytest.raises(SpecValidationError) as info:
            build()
        assert info.value.field == "rho"

    def test_integer_valued(self):
        require_integer_valued(table({1: 1.0}))
        require_integer_valued(degenerate(math.inf))
        with pytest.raises(SpecValidationError):
            require_integer_valued(pareto(1))
        with pytest.raises(SpecValidationError):
            require_integer_valued(degenerate(1.5))


class TestParser:

    def test_literals(self):
        assert parse_distribution("degenerate(1.5)").value == 1.5
        assert parse_distribution("degenerate(value=1.5)").value == 1.5
        assert parse_distribution("uniform(lo=0, hi=1)").hi == 1.0
        assert parse_distribution("pareto(c=2)").kind is DistributionKind.PARETO
        assert parse_distribution("discrete_pareto(c=2)").kind is DistributionKind.DISCRETE_PARETO
        assert parse_distribution("heavy(alpha=0.5)").alpha == 0.5
        parsed = parse_distribution("table(1:0.3, 3:0.7)")
        assert parsed.values == (1, 3) and parsed.masses == (0.3, 0.7)

    def test_describe_round_trip(self):
        dist = uniform(0.5, 2.0)
        assert parse_distribution(dist.describe()) == dist

    @pytest.mark.parametrize("literal", ["gaussian(1)", "pareto", "pareto(c=x)", "uniform(lo=0)"])
    def test_rejected(self, literal):
        with pytest.raises(SpecValidationError) as info:
            parse_distribution(literal)
        assert info.value.field == "rho"
