import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pulsedelay.channel import GroundTruthChannel
from pulsedelay.metrics import (TrialRecord, aggregate, csi_nrmse, delay_diff_mae,
                                delay_difference_error, nrmse, path_count_metrics)
from pulsedelay.sbl import EstimationResult

GT = GroundTruthChannel([24.0, 65.0, 103.0], [10.0, 5.6j, -3.2])
Y_CLEAN = np.array([1.0, 1j, -2.0, 0.5])


def result(delays, amps, y_hat=Y_CLEAN):
    return EstimationResult(np.asarray(delays, float), np.asarray(amps, complex),
                            np.asarray(y_hat, complex), 10, True)


def record(idx, snr=30.0, **results):
    return TrialRecord(idx, snr, GT, Y_CLEAN, dict(results))


class TestPathCount:
    def test_perfect(self):
        recs = [record(0, sbl=result([24, 65, 103], [10, 5, 3]))]
        assert path_count_metrics(recs) == (1.0, 0.0)

    def test_mixture(self):
        recs = [record(0, sbl=result([24, 65, 103], [1, 1, 1])),
                record(1, sbl=result([24, 65], [1, 1])),
                record(2, sbl=result([1, 24, 65, 103, 300], [1, 1, 1, 1, 1])),
                record(3, sbl=result([], []))]
        prob, mae = path_count_metrics(recs)
        assert prob == 0.25
        assert mae == pytest.approx((0 + 1 + 2 + 3) / 4)

    @given(st.lists(st.integers(0, 10), min_size=1, max_size=30))
    def test_mae_bounded_below(self, counts):
        recs = [record(i, sbl=result(np.arange(c) * 10.0, np.ones(c))) for i, c in enumerate(counts)]
        prob, mae = path_count_metrics(recs)
        assert 0.0 <= prob <= 1.0
        assert mae >= 1.0 - prob - 1e-12

    def test_empty(self):
        with pytest.raises(ValueError):
            path_count_metrics([])


class TestNrmse:
    def test_value(self):
        assert nrmse(Y_CLEAN + np.array([0.3, 0, 0, 0.4]), Y_CLEAN) == pytest.approx(0.5 / np.linalg.norm(Y_CLEAN))

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            nrmse(np.ones(3), np.zeros(3))

    @given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 2 ** 32 - 1))
    def test_scale_invariant(self, re, im, seed):
        c = complex(re, im)
        if abs(c) < 1e-3:
            return
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal(8) + 1j * rng.standard_normal(8), rng.standard_normal(8) + 0.1j
        assert nrmse(c * a, c * b) == pytest.approx(nrmse(a, b), rel=1e-12)

    def test_mean_over_trials(self):
        recs = [record(0, sbl=result([], [], Y_CLEAN)), record(1, sbl=result([], [], 0 * Y_CLEAN))]
        assert csi_nrmse(recs, "sbl") == pytest.approx(0.5)


class TestDelayDifference:
    def test_uses_two_strongest(self):
        r = result([10.0, 26.0, 70.0, 110.0], [0.1, 9.0, 5.0, 3.0])
        assert delay_difference_error(r, GT) == pytest.approx(abs(44.0 - 41.0))

    def test_excluded(self):
        assert delay_difference_error(result([24.0], [1.0]), GT) is None

    def test_needs_two_true_paths(self):
        with pytest.raises(ValueError):
            delay_difference_error(result([1, 2], [1, 1]), GroundTruthChannel([5.0], [1.0]))

    @given(st.permutations(range(4)))
    def test_permutation_invariant(self, perm):
        d = np.array([10.0, 26.0, 70.0, 110.0])
        a = np.array([0.1, 9.0, 5.0j, 3.0])
        base = delay_difference_error(result(d, a), GT)
        assert delay_difference_error(result(d[list(perm)], a[list(perm)]), GT) == base

    def test_mae_and_exclusions(self):
        recs = [record(0, sbl=result([24.0, 65.0], [2, 1])),
                record(1, sbl=result([24.0, 67.0], [2, 1])),
                record(2, sbl=result([24.0], [1]))]
        assert delay_diff_mae(recs, "sbl") == (1.0, 1)

    def test_all_excluded(self):
        mae, excluded = delay_diff_mae([record(0, sbl=result([], []))], "sbl")
        assert math.isnan(mae) and excluded == 1


class TestAggregate:
    def test_rows(self):
        recs = []
        for snr in (40.0, 20.0):
            for i in (1, 0):
                recs.append(record(i, snr, sbl=result([24, 65, 103], [3, 2, 1]),
                                   omp=result([24, 66, 103], [3, 2, 1])))
        rep = aggregate(recs)
        assert len(rep.rows) == 4
        assert rep.snr_points == [20.0, 40.0]
        assert rep.algorithms == ["sbl", "omp"]
        assert rep.row(40.0, "omp").delay_diff_mae_ns == 1.0
        assert rep.row(20.0, "sbl").num_trials == 2
        with pytest.raises(KeyError):
            rep.row(30.0, "sbl")

    def test_order_independent(self):
        rng = np.random.default_rng(0)
        recs = [record(i, s, sbl=result([24, 60 + rng.integers(0, 9)], [2, 1], Y_CLEAN * rng.uniform(0.9, 1.1)))
                for s in (20.0, 30.0) for i in range(6)]
        a = aggregate(recs)
        b = aggregate([recs[i] for i in rng.permutation(len(recs))])
        assert a == b

    def test_duplicate_trial(self):
        with pytest.raises(ValueError, match="duplicate"):
            aggregate([record(0, sbl=result([1], [1])), record(0, sbl=result([1], [1]))])

    def test_mixed_algorithms(self):
        with pytest.raises(ValueError, match="mixed"):
            aggregate([record(0, sbl=result([1], [1])), record(1, omp=result([1], [1]))])

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([])
