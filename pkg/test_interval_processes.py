"""
Tests for the line-coverage integral criterion and the random Cantor construction.
"""
import math

import numpy as np
import pytest

from src.core.interval_processes import (
    CantorSequence,
    LengthMeasure,
    PowerPiece,
    cantor_empty_criterion,
    cantor_measure_criterion,
    cantor_vacancy_exact,
    estimate_cantor_vacancy,
    shepp_criterion,
    shepp_inner,
    simulate_cantor,
    torus_intervals,
)
from src.core.verdicts import VerdictStatus
from src.utils.config import SpecValidationError
from src.utils.stats import split_stream


class TestInnerIntegral:

    def test_atom(self):
        assert shepp_inner(LengthMeasure(atoms=((1.0, 2.0),)), 0.5) == pytest.approx(1.0)

    def test_slow_tail_is_infinite(self):
        mu = LengthMeasure(pieces=(PowerPiece(1.0, math.inf, 1.0, 2.0),))
        assert math.isinf(shepp_inner(mu, 0.5))

    def test_support_below_x(self):
        mu = LengthMeasure(atoms=((0.2, 1.0),), pieces=(PowerPiece(0.1, 0.3, 1.0, 3.0),))
        assert shepp_inner(mu, 0.5) == 0.0

    def test_power_piece_closed_form(self):
        """Density y^-3 on (1, inf): integral of (y - x) y^-3 is 1 - x/2."""
        mu = LengthMeasure(pieces=(PowerPiece(1.0, math.inf, 1.0, 3.0),))
        assert shepp_inner(mu, 0.4) == pytest.approx(0.8)

    def test_monotone_and_convex(self):
        mu = LengthMeasure(atoms=((0.7, 0.5),), pieces=(PowerPiece(0.2, 5.0, 1.0, 1.5),))
        xs = np.linspace(0.01, 0.99, 99)
        values = np.array([shepp_inner(mu, x) for x in xs])
        assert np.all(np.diff(values) <= 1e-12)
        assert np.all(np.diff(values, n=2) >= -1e-9)

    def test_x_domain(self):
        with pytest.raises(SpecValidationError):
            shepp_inner(LengthMeasure(), 1.0)


class TestLineCriterion:

    def test_single_atom_converges(self):
        verdict = shepp_criterion(LengthMeasure(atoms=((0.5, 1.0),)))
        assert verdict.status is VerdictStatus.CONVERGES
        assert verdict.evidence["integral"] == pytest.approx(math.exp(0.5) - 0.5, rel=1e-6)
        assert not verdict.evidence["covered"]

    def test_slow_tail_covers(self):
        verdict = shepp_criterion(LengthMeasure(pieces=(PowerPiece(1.0, math.inf, 1.0, 2.0),)))
        assert verdict.diverges
        assert verdict.evidence["covered"]

    def test_empty_measure(self):
        verdict = shepp_criterion(LengthMeasure())
        assert verdict.status is VerdictStatus.CONVERGES
        assert verdict.evidence["integral"] == pytest.approx(1.0)

    @pytest.mark.parametrize("beta, status", [(0.5, VerdictStatus.CONVERGES), (1.0, VerdictStatus.DIVERGES),
                                              (2.0, VerdictStatus.DIVERGES)])
    def test_inverse_square_at_zero(self, beta, status):
        """beta y^-2 near 0 makes exp(inner) grow like x^-beta."""
        verdict = shepp_criterion(LengthMeasure(pieces=(PowerPiece(0.0, 0.5, beta, 2.0),)))
        assert verdict.status is status
        assert verdict.evidence["log_exponent"] == pytest.approx(beta)

    def test_log_slope_tracks_exponent(self):
        verdict = shepp_criterion(LengthMeasure(pieces=(PowerPiece(0.0, 0.5, 0.5, 2.0),)))
        assert verdict.fitted_c == pytest.approx(0.5, abs=1e-3)

    def test_steep_density_covers(self):
        assert shepp_criterion(LengthMeasure(pieces=(PowerPiece(0.0, 0.5, 0.1, 3.0),))).diverges

    def test_invalid_measures(self):
        with pytest.raises(SpecValidationError):
            LengthMeasure(atoms=((-1.0, 1.0),))
        with pytest.raises(SpecValidationError):
            LengthMeasure(pieces=(PowerPiece(0.0, 2.0, 1.0, 2.0), PowerPiece(1.0, 3.0, 1.0, 2.0)))
        with pytest.raises(SpecValidationError):
            PowerPiece(2.0, 1.0, 1.0, 2.0)


class TestCantorCriteria:

    def test_measure_zero_threshold(self):
        assert cantor_measure_criterion(CantorSequence(1.0, scale=0.5, exponent=1.0)).diverges
        assert cantor_measure_criterion(CantorSequence(1.0, scale=0.5, exponent=1.5)).status is VerdictStatus.CONVERGES

    def test_explicit_lengths_undecided(self):
        verdict = cantor_measure_criterion(CantorSequence(1.0, explicit=(0.5, 0.25, 0.125)))
        assert verdict.status is VerdictStatus.INDETERMINATE
        assert verdict.partial_sums[-1] == pytest.approx(0.875)

    @pytest.mark.parametrize("intensity, status", [(1.0, VerdictStatus.CONVERGES), (2.0, VerdictStatus.DIVERGES),
                                                   (3.0, VerdictStatus.DIVERGES)])
    def test_empty_threshold(self, intensity, status):
        verdict = cantor_empty_criterion(CantorSequence(intensity, scale=0.5, exponent=1.0))
        assert verdict.status is status
        assert verdict.fitted_c == pytest.approx(2.0 - 0.5 * intensity)

    def test_other_exponents(self):
        assert cantor_empty_criterion(CantorSequence(0.1, scale=0.5, exponent=0.5)).diverges
        assert cantor_empty_criterion(CantorSequence(50.0, scale=1.0, exponent=2.0)).status is VerdictStatus.CONVERGES

    def test_empty_implies_measure_zero(self):
        for scale in (0.1, 0.5, 1.0):
            for exponent in (0.5, 1.0, 1.5):
                for intensity in (0.5, 1.0, 4.0):
                    seq = CantorSequence(intensity, scale=scale, exponent=exponent)
                    if cantor_empty_criterion(seq).diverges:
                        assert cantor_measure_criterion(seq).diverges, f"{seq}"


class TestCantorSimulation:

    def test_torus_split(self):
        lo, hi = torus_intervals(np.array([0.2, 0.9]), 0.3)
        assert lo.tolist() == pytest.approx([0.2, 0.9, 0.0])
        assert hi.tolist() == pytest.approx([0.5, 1.0, 0.2])

    def test_full_length_arcs(self):
        seq = CantorSequence(20.0, explicit=(1.0,))
        result = estimate_cantor_vacancy(seq, 1, 200, seed=3)
        assert result.estimate < 0.01

    def test_vacancy_matches_exact(self):
        seq = CantorSequence(1.0, explicit=(0.5, 0.25))
        result = estimate_cantor_vacancy(seq, 2, 1000, seed=8)
        target = math.exp(-0.75)
        assert result.details["exact"] == pytest.approx(target)
        assert abs(result.estimate - target) < 4 * result.standard_error + 0.005

    def test_more_levels_never_add_vacancy(self):
        seq = CantorSequence(2.0, scale=0.5, exponent=1.0)
        for r in range(20):
            fewer = simulate_cantor(seq, 3, split_stream(14, r))
            more = simulate_cantor(seq, 6, split_stream(14, r))
            assert more.vacant_measure <= fewer.vacant_measure + 1e-12

    def test_exact_vacancy(self):
        assert cantor_vacancy_exact(CantorSequence(2.0, scale=1.0, exponent=1.0), 2) == pytest.approx(math.exp(-3.0))


class TestCantorValidation:

    def test_intensity(self):
        with pytest.raises(SpecValidationError) as info:
            CantorSequence(0.0, explicit=(0.5,))
        assert info.value.field == "intensity"

    def test_increasing_lengths(self):
        with pytest.raises(SpecValidationError):
            CantorSequence(1.0, explicit=(0.25, 0.5))

    def test_mixed_forms(self):
        with pytest.raises(SpecValidationError):
            CantorSequence(1.0, explicit=(0.5,), scale=0.5, exponent=1.0)

    def test_scale_range(self):
        with pytest.raises(SpecValidationError):
            CantorSequence(1.0, scale=1.5, exponent=1.0)

    def test_too_many_levels(self):
        with pytest.raises(SpecValidationError):
            CantorSequence(1.0, explicit=(0.5, 0.25)).lengths(3)
