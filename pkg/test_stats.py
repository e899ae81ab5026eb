"""
Tests for random streams, interval estimates, replicate fan-out and result hashing/writing.
"""
import math

import numpy as np
import pytest
from scipy import stats

from src.utils.config import SpecValidationError
from src.utils.stats import (
    Provenance,
    map_replicates,
    mean_and_standard_error,
    split_stream,
    summarize_mean,
    summarize_proportion,
    wilson_interval,
)
from src.utils.utils import canonical_json, config_hash, write_atomic


class TestStreams:

    def test_replayable(self):
        assert np.array_equal(split_stream(7, 3).random(100), split_stream(7, 3).random(100))

    def test_distinct(self):
        assert not np.array_equal(split_stream(7, 0).random(100), split_stream(7, 1).random(100))
        assert not np.array_equal(split_stream(7, 0).random(100), split_stream(8, 0).random(100))

    def test_uniform(self):
        draws = split_stream(99, 0).random(50_000)
        observed, _ = np.histogram(draws, bins=10, range=(0.0, 1.0))
        _, p_value = stats.chisquare(observed)
        assert p_value > 1e-3, f"chi-square p-value {p_value}"

    def test_uncorrelated_neighbours(self):
        n = 20_000
        first = split_stream(5, 0).random(n)
        second = split_stream(5, 1).random(n)
        assert abs(np.corrcoef(first, second)[0, 1]) < 4 / math.sqrt(n)

    def test_negative_index(self):
        with pytest.raises(SpecValidationError):
            split_stream(1, -1)


class TestWilson:

    def test_half(self):
        lo, hi = wilson_interval(5, 10)
        assert lo == pytest.approx(0.2366, abs=1e-4)
        assert hi == pytest.approx(0.7634, abs=1e-4)

    def test_extremes(self):
        assert wilson_interval(0, 20)[0] == 0.0
        assert wilson_interval(20, 20)[1] == 1.0
        assert wilson_interval(0, 20)[1] > 0.0

    def test_matches_formula(self):
        s, n = 37, 120
        z = stats.norm.ppf(0.975)
        phat = s / n
        centre = (phat + z ** 2 / (2 * n)) / (1 + z ** 2 / n)
        half = z * math.sqrt(phat * (1 - phat) / n + z ** 2 / (4 * n ** 2)) / (1 + z ** 2 / n)
        assert wilson_interval(s, n) == pytest.approx((centre - half, centre + half))

    @pytest.mark.parametrize("successes, trials", [(3, 0), (-1, 5), (6, 5)])
    def test_invalid(self, successes, trials):
        with pytest.raises(SpecValidationError):
            wilson_interval(successes, trials)


class TestReplicates:

    def test_thread_count_does_not_change_results(self):
        def task(r, stream):
            return (r, float(stream.random()))

        serial = map_replicates(task, 11, 40, n_jobs=1)
        threaded = map_replicates(task, 11, 40, n_jobs=2)
        assert serial == threaded
        assert [r for r, _ in serial] == list(range(40))

    def test_env_thread_count(self, monkeypatch):
        monkeypatch.setenv("COVLAB_THREADS", "2")
        values = map_replicates(lambda r, stream: float(stream.random()), 3, 10)
        monkeypatch.setenv("COVLAB_THREADS", "1")
        assert values == map_replicates(lambda r, stream: float(stream.random()), 3, 10)

    def test_zero_replicates(self):
        with pytest.raises(SpecValidationError):
            map_replicates(lambda r, stream: r, 1, 0)


class TestSummaries:

    def test_mean_and_se(self):
        mean, se = mean_and_standard_error([1.0, 2.0, 3.0])
        assert mean == pytest.approx(2.0)
        assert se == pytest.approx(1.0 / math.sqrt(3.0))
        assert mean_and_standard_error([4.0]) == (4.0, 0.0)

    def test_proportion(self):
        provenance = Provenance(config_hash="abc", seed=1)
        result = summarize_proportion("demo", [True, False, True, True], provenance)
        assert result.estimate == pytest.approx(0.75)
        assert result.details["successes"] == 3
        assert result.interval == pytest.approx(wilson_interval(3, 4))

    def test_mean_interval_is_symmetric(self):
        result = summarize_mean("demo", [0.1, 0.3, 0.5], Provenance(config_hash="abc", seed=1))
        lo, hi = result.interval
        assert (lo + hi) / 2 == pytest.approx(result.estimate)


class TestHashingAndWrites:

    def test_hash_ignores_key_order(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})

    def test_canonical_json(self):
        assert canonical_json({"b": 1, "a": 2.5}) == '{"a":2.5,"b":1}'

    def test_provenance_from_payload(self):
        provenance = Provenance.for_payload({"p": 0.5}, 9)
        assert provenance.config_hash == config_hash({"p": 0.5})
        assert len(provenance.config_hash) == 16

    def test_write_atomic(self, tmp_path):
        target = tmp_path / "nested" / "out.csv"
        write_atomic(target, "a,b\n1,2\n")
        assert target.read_text(encoding="utf-8") == "a,b\n1,2\n"
        assert [p.name for p in target.parent.iterdir()] == ["out.csv"]
