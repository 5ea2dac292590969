import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from qegm import metrics
from qegm.data import BENCHMARK_MIXTURE
from qegm.errors import UndefinedMetricError, ValidationError
from qegm.randomness import SeededPrng


def everything():
    return metrics.TailRegion(lambda x: np.zeros(len(x)), 0.0, "all")


def test_two_bin_kl_hand_value():
    kl = metrics.kl_from_counts([3, 1], [2, 2], smoothing=1e-12)
    assert kl == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5), abs=1e-10)
    assert kl == pytest.approx(0.13081, abs=1e-5)


def test_two_bin_kl_through_tail_kl():
    real = np.array([0.0, 1.0, 2.0, 3.0])
    model = np.array([0.0, 0.5, 1.0, 2.5])
    # the shared edge is the real median 1.5, so P = (1/2, 1/2) and Q = (3/4, 1/4)
    kl = metrics.tail_kl(real, model, everything(), bins=2, smoothing=1e-12)
    assert kl == pytest.approx(0.5 * math.log(2 / 3) + 0.5 * math.log(2), abs=1e-10)


def test_identical_samples_give_zero():
    x = SeededPrng(0).normal(5000)
    region = metrics.region_from_mass(metrics.mixture_score(BENCHMARK_MIXTURE), x, 0.2)
    assert metrics.tail_kl(x, x.copy(), region) == pytest.approx(0.0, abs=1e-12)


def test_disjoint_support_large_and_decreasing_in_smoothing():
    real, model = np.linspace(-5, -4, 200), np.linspace(4, 5, 200)
    region = metrics.TailRegion(lambda x: np.abs(x[:, 0]), 3.0)
    values = [metrics.tail_kl(real, model, region, bins=8, smoothing=s) for s in (1e-12, 1e-9, 1e-6, 1e-3)]
    assert all(np.isfinite(values)) and values[0] > 10
    assert all(a > b for a, b in zip(values, values[1:]))


def test_empty_model_tail_is_finite():
    region = metrics.TailRegion(lambda x: np.abs(x[:, 0]), 3.0)
    kl = metrics.tail_kl(np.array([4.0, 5.0, -4.0]), np.zeros(10), region, bins=2)
    assert np.isfinite(kl) and kl > 10


def test_no_real_tail_samples():
    region = metrics.TailRegion(lambda x: np.abs(x[:, 0]), 3.0)
    with pytest.raises(UndefinedMetricError):
        metrics.tail_kl(np.zeros(5), np.ones(5) * 4, region)


def test_bins_validation():
    with pytest.raises(ValidationError):
        metrics.tail_kl([1.0], [1.0], everything(), bins=1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 2.0))
def test_tail_kl_non_negative(seed, shift):
    src = SeededPrng(seed)
    real, model = np.asarray(src.normal(500)), np.asarray(src.normal(500)) + shift
    region = metrics.TailRegion(lambda x: np.abs(x[:, 0]), 1.0)
    assert metrics.tail_kl(real, model, region, bins=8) >= 0


def test_tail_region_mass():
    x = SeededPrng(1).normal(10_000)
    region = metrics.region_from_mass(metrics.mixture_score(BENCHMARK_MIXTURE), x, 0.1)
    assert region.contains(x).mean() == pytest.approx(0.1, abs=1e-3)


def test_mixture_score_is_negative_log_density():
    x = np.array([-3.0, 0.0, 5.0])
    assert np.allclose(metrics.mixture_score(BENCHMARK_MIXTURE)(x), -BENCHMARK_MIXTURE.logpdf(x))


def test_kde_score_matches_scipy():
    ref = np.asarray(SeededPrng(2).normal(300))
    kde = stats.gaussian_kde(ref, bw_method="silverman")
    q = np.array([-2.0, 0.0, 3.0])
    assert np.allclose(metrics.kde_score(ref)(q), -kde.logpdf(q))


def test_recall_examples():
    rule = lambda x: x[:, 0] < -2.5
    held = np.array([-3.0, -4.0, -2.6])
    assert metrics.rare_recall(held, lambda x: x, rule).recall == 1.0
    assert metrics.rare_recall(held, lambda x: np.zeros_like(x), rule).recall == 0.0
    r = metrics.recall_from_counts(14, 2)
    assert r.recall == 0.875 and (r.tp, r.fn) == (14, 2)


def test_recall_errors():
    rule = lambda x: x[:, 0] < -2.5
    with pytest.raises(UndefinedMetricError):
        metrics.rare_recall(np.empty((0, 1)), lambda x: x, rule)
    with pytest.raises(ValidationError):
        metrics.rare_recall(np.array([0.0, -3.0]), lambda x: x, rule)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, -2.51), min_size=1, max_size=30), st.integers(0, 1000))
def test_recall_order_invariant(values, seed):
    rule = lambda x: x[:, 0] < -2.5
    shrink = lambda x: x * 0.8
    a = metrics.rare_recall(np.array(values), shrink, rule)
    perm = np.random.default_rng(seed).permutation(len(values))
    b = metrics.rare_recall(np.array(values)[perm], shrink, rule)
    assert a == b and 0 <= a.recall <= 1


def test_coverage_true_model_oracle():
    n = 10_000
    src = SeededPrng(3)
    mean = np.asarray(src.normal(n)) * 2
    std = 0.5 + np.asarray(src.uniform(n))
    y = mean + std * np.asarray(src.normal(n))
    curve = metrics.coverage_curve(y, mean, std, [0.5, 0.8, 0.9, 0.95])
    for a, c in curve:
        assert abs(c - a) <= 0.02
    assert 0.888 <= dict(curve)[0.9] <= 0.912


def test_coverage_zero_variance():
    y = np.array([1.0, 2.0, 3.0])
    curve = metrics.coverage_curve(y, np.array([1.0, 0.0, 0.0]), np.zeros(3), [0.5, 0.9])
    assert [c for _, c in curve] == [1 / 3, 1 / 3]


def test_coverage_all_dimensions_must_be_inside():
    y = np.array([[0.0, 5.0]])
    assert metrics.coverage_curve(y, np.zeros((1, 2)), np.ones((1, 2)), [0.9])[0][1] == 0.0


def test_coverage_interval_width():
    # a point exactly 1.6448... std away sits on the 0.9 boundary
    q = stats.norm.ppf(0.95)
    inside = metrics.coverage_curve(np.array([q - 1e-9]), np.zeros(1), np.ones(1), [0.9])[0][1]
    outside = metrics.coverage_curve(np.array([q + 1e-9]), np.zeros(1), np.ones(1), [0.9])[0][1]
    assert (inside, outside) == (1.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_coverage_monotone(seed):
    src = SeededPrng(seed)
    y = np.asarray(src.normal(200)) * 1.5
    curve = metrics.coverage_curve(y, np.zeros(200), np.ones(200), [0.5, 0.9, 0.99])
    cs = [c for _, c in curve]
    assert cs == sorted(cs)


def test_coverage_shape_checks():
    with pytest.raises(ValidationError):
        metrics.coverage_curve(np.zeros(3), np.zeros(2), np.ones(3), [0.5])
    with pytest.raises(ValidationError):
        metrics.coverage_curve(np.zeros(3), np.zeros(3), np.ones(3), [1.0])


def test_coverage_error():
    assert metrics.coverage_error([(0.5, 0.6), (0.9, 0.8)]) == pytest.approx(0.1)


def test_wasserstein_examples():
    x = np.asarray(SeededPrng(4).normal(1000))
    assert metrics.wasserstein_1d(x, x) == 0.0
    assert metrics.wasserstein_1d(np.zeros(5), np.full(3, 2.5)) == pytest.approx(2.5)
    with pytest.raises(ValidationError):
        metrics.wasserstein_1d([], [1.0])


def test_wasserstein_shifted_gaussians():
    a = np.asarray(SeededPrng(5).normal(100_000))
    b = np.asarray(SeededPrng(6).normal(100_000)) + 1
    assert abs(metrics.wasserstein_1d(a, b) - 1) <= 0.05


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40), st.lists(st.floats(-50, 50), min_size=1, max_size=40))
def test_wasserstein_matches_scipy(a, b):
    assert metrics.wasserstein_1d(a, b) == pytest.approx(stats.wasserstein_distance(a, b), abs=1e-9)


def test_wasserstein_averages_features():
    a = np.zeros((4, 2))
    b = np.column_stack([np.ones(4), np.full(4, 3.0)])
    assert metrics.wasserstein_1d(a, b) == pytest.approx(2.0)


def test_report_round_trip_and_validation():
    rep = metrics.MetricsReport(0.1, 0.875, 14, 2, [(0.5, 0.4), (0.9, 0.95)], 0.3, {"bins": 32}, {"seed": 0})
    d = rep.to_dict()
    assert d["coverage_error"] == pytest.approx(0.075)
    assert metrics.MetricsReport.from_dict(d) == rep
    with pytest.raises(ValidationError):
        metrics.MetricsReport(0.1, 0.5, 1, 1, [(0.9, 0.9), (0.5, 0.5)], 0.1)
    with pytest.raises(ValidationError):
        metrics.MetricsReport(float("nan"), 0.5, 1, 1, [(0.5, 0.5)], 0.1)
