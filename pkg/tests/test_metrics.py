import numpy as np
import pytest

from poslearn.metrics import (
    PredictionPoint,
    UndefinedMetric,
    accuracy_stats,
    auroc,
    calibration_curve,
    calibration_stats,
    decision_curve,
    individual_metrics,
    time_profiles,
)


def brute_force_auc(labels, scores):
    pos = scores[labels == 1.0]
    neg = scores[labels == 0.0]
    wins = ties = 0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1
            elif p == q:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


class TestAccuracy:
    def test_direct_arithmetic(self):
        mdae, mse = accuracy_stats([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        assert mdae == 2.0
        assert mse == pytest.approx(14.0 / 3.0)

    def test_perfect(self):
        assert accuracy_stats([1.0, 2.0], [1.0, 2.0]) == (0.0, 0.0)

    def test_even_count_median_rule(self):
        mdae, _ = accuracy_stats([1.0, 3.0], [0.0, 0.0])
        assert mdae == 2.0

    def test_permutation_invariant_in_pairs(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=20)
        yhat = rng.normal(size=20)
        perm = rng.permutation(20)
        assert accuracy_stats(y, yhat) == accuracy_stats(y[perm], yhat[perm])

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            accuracy_stats([], [])


class TestCalibration:
    def test_pure_shift(self):
        pred = np.linspace(0, 10, 20)
        intercept, slope = calibration_stats(pred + 2.0, pred)
        assert intercept == pytest.approx(2.0)
        assert slope == pytest.approx(1.0)

    def test_pure_scaling(self):
        pred = np.linspace(-5, 5, 21)  # zero mean
        intercept, slope = calibration_stats(2.0 * pred, pred)
        assert slope == pytest.approx(2.0)
        assert intercept == pytest.approx(0.0, abs=1e-12)

    def test_ideal(self):
        pred = np.linspace(0, 1, 15)
        assert calibration_stats(pred, pred) == (pytest.approx(0.0), pytest.approx(1.0))

    def test_constant_predictions_slope_undefined(self):
        intercept, slope = calibration_stats([1.0, 2.0, 3.0], [2.0, 2.0, 2.0])
        assert slope is None
        assert intercept == pytest.approx(0.0)

    def test_intercept_is_mean_residual(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=30)
        yhat = rng.normal(size=30)
        intercept, _ = calibration_stats(y, yhat)
        assert intercept == pytest.approx(float(np.mean(y - yhat)))


class TestCalibrationCurve:
    def test_identity_on_diagonal(self):
        pred = np.linspace(0, 1, 40)
        curve = calibration_curve(pred, pred, method="binned", resolution=5)
        for x, y in curve.points:
            assert y == pytest.approx(x, abs=1e-8)

    def test_shift_parallel_to_diagonal(self):
        pred = np.linspace(0, 1, 40)
        curve = calibration_curve(pred + 2.0, pred, method="binned", resolution=5)
        for x, y in curve.points:
            assert y - x == pytest.approx(2.0, abs=1e-8)

    def test_local_linear_recovers_quadratic(self):
        pred = np.linspace(0, 1, 500)
        obs = pred**2
        curve = calibration_curve(obs, pred, method="local_linear", resolution=50)
        interior = [(x, y) for x, y in curve.points if 0.1 <= x <= 0.9]
        assert interior
        for x, y in interior:
            assert abs(y - x**2) < 0.02

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError, match="at least 10"):
            calibration_curve([1.0] * 5, [1.0] * 5, method="local_linear")


class TestAuroc:
    def test_four_point_fixture(self):
        auc, _ = auroc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8])
        assert auc == pytest.approx(0.75)

    def test_perfect_separation(self):
        labels = np.array([0.0, 1.0, 0.0, 1.0])
        auc, _ = auroc(labels, labels)
        assert auc == 1.0

    def test_all_ties_give_half(self):
        auc, _ = auroc([0, 1, 0, 1], [0.5, 0.5, 0.5, 0.5])
        assert auc == 0.5

    def test_matches_pair_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(4, 51))
            labels = rng.integers(0, 2, size=n).astype(float)
            if labels.sum() in (0, n):
                labels[0] = 1.0 - labels[0]
            scores = np.round(rng.normal(size=n), 1)  # rounded to force ties
            auc, _ = auroc(labels, scores)
            assert auc == pytest.approx(brute_force_auc(labels, scores), abs=1e-10)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            labels = rng.integers(0, 2, size=30).astype(float)
            if labels.sum() in (0, 30):
                labels[0] = 1.0 - labels[0]
            scores = rng.normal(size=30)
            a, _ = auroc(labels, scores)
            b, _ = auroc(labels, np.exp(scores))
            assert a == pytest.approx(b, abs=1e-12)

    def test_single_class_signalled(self):
        with pytest.raises(UndefinedMetric):
            auroc([1, 1, 1], [0.5, 0.6, 0.7])

    def test_hanley_mcneil_interval(self):
        rng = np.random.default_rng(4)
        labels = rng.integers(0, 2, size=200).astype(float)
        scores = labels + rng.normal(scale=0.8, size=200)
        auc, interval = auroc(labels, scores, ci=True)
        lo, hi = interval
        assert 0.0 <= lo < auc < hi <= 1.0


class TestDecisionCurve:
    def test_direct_substitution(self):
        # n=10, TP=3, FP=2 at threshold 0.5, prevalence 0.5
        labels = np.array([1, 1, 1, 1, 1, 0, 0, 0, 0, 0], dtype=float)
        scores = np.array([0.9, 0.8, 0.7, 0.2, 0.1, 0.6, 0.55, 0.3, 0.2, 0.1])
        dc = decision_curve(labels, scores, [0.5], weight_mode="prevalence_odds")
        assert dc.net_benefit[0] == pytest.approx(0.3 - 0.2 * 1.0)

    def test_perfect_classifier_reaches_prevalence(self):
        labels = np.array([1, 1, 0, 0, 0], dtype=float)
        dc = decision_curve(labels, labels, [0.5], weight_mode="prevalence_odds")
        assert dc.net_benefit[0] == pytest.approx(0.4)

    def test_classify_none_is_zero(self):
        labels = np.array([1, 0, 1, 0], dtype=float)
        scores = np.array([0.2, 0.3, 0.4, 0.1])
        dc = decision_curve(labels, scores, [0.9], weight_mode="prevalence_odds")
        assert dc.net_benefit[0] == 0.0

    def test_treat_all_is_zero_under_prevalence_odds(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(5, 40))
            labels = rng.integers(0, 2, size=n).astype(float)
            if labels.sum() in (0, n):
                labels[0] = 1.0 - labels[0]
            scores = rng.normal(size=n)
            dc = decision_curve(
                labels, scores, [float(scores.min())], weight_mode="prevalence_odds"
            )
            assert dc.net_benefit[0] == pytest.approx(0.0, abs=1e-12)

    def test_matches_longhand(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.integers(5, 40))
            labels = rng.integers(0, 2, size=n).astype(float)
            if labels.sum() in (0, n):
                labels[0] = 1.0 - labels[0]
            scores = rng.uniform(0.0, 1.0, size=n)
            ths = rng.uniform(0.05, 0.9, size=4)
            dc = decision_curve(labels, scores, ths, weight_mode="threshold_odds")
            for t, nb in zip(ths, dc.net_benefit):
                tp = float(np.sum((scores >= t) & (labels == 1)))
                fp = float(np.sum((scores >= t) & (labels == 0)))
                expected = tp / n - fp / n * (t / (1 - t))
                assert nb == pytest.approx(expected, abs=1e-10)

    def test_prevalence_one_signalled(self):
        with pytest.raises(UndefinedMetric):
            decision_curve([1, 1], [0.4, 0.8], [0.5], weight_mode="prevalence_odds")


class TestIndividualMetrics:
    def test_binarizes_observed_for_auroc(self):
        observed = np.array([30.0, 20.0, 26.0, 18.0])
        predicted = np.array([29.0, 21.0, 25.0, 19.0])
        m = individual_metrics("a", observed, predicted, binarize_threshold=24.0)
        assert m.auroc == 1.0
        assert m.n == 4

    def test_single_class_auroc_none(self):
        observed = np.array([30.0, 31.0, 32.0])
        m = individual_metrics("a", observed, observed, binarize_threshold=24.0)
        assert m.auroc is None


class TestTimeProfiles:
    def _points(self, spec):
        return [
            PredictionPoint(ind, s, obs, pred)
            for ind, s, obs, pred in spec
        ]

    def test_constant_aggregate(self):
        pts = self._points(
            [(f"i{k}", 12, 10.0, 8.0) for k in range(5)]
            + [(f"i{k}", 13, 10.0, 10.0) for k in range(5)]
        )
        profile = time_profiles(pts, "mdae")
        assert profile == [(1, 2.0), (2, 0.0)]

    def test_median_robust_to_one_extreme(self):
        pts = self._points(
            [(f"i{k}", 12, 10.0, 9.0) for k in range(9)] + [("ix", 12, 10.0, 500.0)]
        )
        profile = time_profiles(pts, "mdae")
        assert profile == [(1, 1.0)]

    def test_zero_span_returns_raw(self):
        pts = self._points(
            [("a", 12, 10.0, 8.0), ("b", 12, 12.0, 10.0), ("a", 13, 9.0, 9.0),
             ("b", 13, 9.0, 9.0)]
        )
        raw = time_profiles(pts, "calib_intercept", smoothing_span=0.0)
        assert raw == [(1, 2.0), (2, 0.0)]

    def test_smoothing_changes_series(self):
        rng = np.random.default_rng(7)
        pts = []
        for s in range(12, 42):
            for k in range(4):
                pts.append(
                    PredictionPoint(f"i{k}", s, float(rng.normal()), 0.0)
                )
        raw = time_profiles(pts, "mdae", smoothing_span=0.0)
        smooth = time_profiles(pts, "mdae", smoothing_span=0.5)
        assert len(raw) == len(smooth)
        raw_vals = np.array([v for _, v in raw])
        smooth_vals = np.array([v for _, v in smooth])
        assert np.std(np.diff(smooth_vals)) < np.std(np.diff(raw_vals))

    def test_slope_profile(self):
        pts = self._points(
            [("a", 12, 4.0, 2.0), ("b", 12, 8.0, 4.0), ("c", 12, 12.0, 6.0)]
        )
        profile = time_profiles(pts, "calib_slope")
        assert profile == [(1, pytest.approx(2.0))]
