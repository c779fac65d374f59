import numpy as np
import pytest

from poslearn.learners import (
    FittedLearner,
    LearnerSpec,
    dump_learner,
    fit,
    fitted_from_dict,
    fitted_to_dict,
    load_learner,
    predict,
    rf_importance_screen,
)
from poslearn.learners.linear import (
    fit_lasso,
    lasso_objective,
    normalized_weights,
    soft_threshold,
)
from poslearn.learners.spline import fit_hinge_spline
from poslearn.learners.trees import fit_gbt


def spec(family, **kwargs):
    hyper = kwargs.pop("hyperparameters", {})
    return LearnerSpec(family=family, hyperparameters=hyper, **kwargs)


def random_design(rng, n=40, p=4):
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=p)
    y = 1.0 + X @ beta + 0.1 * rng.normal(size=n)
    return X, y


class TestMean:
    def test_constant_predictor(self):
        fitted = fit(spec("mean"), np.zeros((3, 2)), [1.0, 2.0, 3.0])
        out = predict(fitted, np.ones((5, 2)))
        np.testing.assert_allclose(out, 2.0)

    def test_weighted(self):
        fitted = fit(spec("mean"), np.zeros((2, 1)), [0.0, 10.0], weights=np.array([3.0, 1.0]))
        assert predict(fitted, np.zeros((1, 1)))[0] == pytest.approx(2.5)


class TestLinear:
    def test_interpolates_noiseless_line(self):
        x = np.linspace(0, 5, 12)[:, None]
        y = 3.0 + 2.0 * x[:, 0]
        fitted = fit(spec("linear"), x, y)
        np.testing.assert_allclose(predict(fitted, x), y, atol=1e-8)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        X, y = random_design(rng)
        w = rng.random(len(y)) + 0.5
        fitted = fit(spec("linear"), X, y, weights=w)
        perm = rng.permutation(len(y))
        refit = fit(spec("linear"), X[perm], y[perm], weights=w[perm])
        grid = rng.normal(size=(6, X.shape[1]))
        np.testing.assert_allclose(
            predict(fitted, grid), predict(refit, grid), atol=1e-8
        )

    def test_binary_separable_probabilities(self):
        # 20 points, class determined by sign of the first feature
        rng = np.random.default_rng(1)
        x1 = np.concatenate([rng.uniform(0.5, 2.0, 10), rng.uniform(-2.0, -0.5, 10)])
        x2 = rng.normal(size=20)
        X = np.column_stack([x1, x2])
        y = (x1 > 0).astype(float)
        fitted = fit(spec("linear", outcome_mode="binary"), X, y)
        assert fitted.converged
        probs = predict(fitted, X)
        assert np.all((probs > 0.5) == (y == 1.0))
        assert np.all((probs >= 0) & (probs <= 1))


class TestRidge:
    def test_zero_penalty_equals_linear(self):
        rng = np.random.default_rng(2)
        X, y = random_design(rng)
        lin = fit(spec("linear"), X, y)
        rid = fit(spec("ridge", hyperparameters={"penalty": 0.0}), X, y)
        np.testing.assert_allclose(
            lin.parameters["coef"], rid.parameters["coef"], atol=1e-8
        )

    def test_shrinkage_monotone_in_penalty(self):
        rng = np.random.default_rng(3)
        X, y = random_design(rng)
        norms = []
        for lam in (0.0, 0.5, 2.0, 10.0, 100.0):
            fitted = fit(spec("ridge", hyperparameters={"penalty": lam}), X, y)
            norms.append(np.linalg.norm(fitted.parameters["coef"][1:]))
        assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))


class TestLasso:
    def test_soft_threshold_kernel(self):
        assert soft_threshold(3.0, 1.0) == 2.0
        assert soft_threshold(-3.0, 1.0) == -2.0
        assert soft_threshold(0.5, 1.0) == 0.0

    def test_penalty_above_lambda_max_gives_null_model(self):
        rng = np.random.default_rng(4)
        X, y = random_design(rng, n=30, p=5)
        n = len(y)
        lam_max = np.max(np.abs(X.T @ (y - y.mean()))) / n
        fitted = fit(
            spec("lasso", hyperparameters={"penalty": lam_max * 1.000001}), X, y
        )
        coef = fitted.parameters["coef"]
        np.testing.assert_array_equal(coef[1:], 0.0)
        assert coef[0] == pytest.approx(y.mean())

    def test_objective_non_increasing_across_sweeps(self):
        rng = np.random.default_rng(5)
        X, y = random_design(rng, n=25, p=6)
        w = normalized_weights(len(y), None)
        history: list = []
        fit_lasso(X, y, w, lam=0.05, history=history)
        assert all(a >= b - 1e-12 for a, b in zip(history, history[1:]))

    def test_objective_matches_definition(self):
        rng = np.random.default_rng(6)
        X, y = random_design(rng, n=10, p=3)
        w = normalized_weights(len(y), None)
        coef, _ = fit_lasso(X, y, w, lam=0.1)
        direct = 0.5 * np.mean((y - coef[0] - X @ coef[1:]) ** 2) + 0.1 * np.sum(
            np.abs(coef[1:])
        )
        assert lasso_objective(X, y, w, coef, 0.1) == pytest.approx(direct)


class TestHingeSpline:
    def test_recovers_piecewise_linear_shape(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-2, 2, 120)
        y = np.maximum(0.0, x - 0.5) * 3.0 + 1.0
        fitted = fit(spec("hinge_spline"), x[:, None], y)
        pred = predict(fitted, x[:, None])
        assert np.mean((pred - y) ** 2) < 0.05

    def test_pruned_to_intercept_equals_mean(self):
        # constant target: no hinge survives, intercept-only == mean learner
        X = np.linspace(0, 1, 30)[:, None]
        y = np.full(30, 4.2)
        terms, coef, ok = fit_hinge_spline(X, y, np.full(30, 1 / 30))
        assert ok and terms == []
        assert coef[0] == pytest.approx(4.2)

    def test_heavy_penalty_prunes_to_mean(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(40, 2))
        y = rng.normal(size=40)  # pure noise
        fitted = fit(
            spec("hinge_spline", hyperparameters={"gcv_penalty": 1000.0}),
            X, y,
        )
        assert fitted.parameters["terms"] == []
        mean_fit = fit(spec("mean"), X, y)
        np.testing.assert_allclose(
            predict(fitted, X), predict(mean_fit, X), atol=1e-12
        )


class TestGbt:
    def test_zero_rounds_is_weighted_mean(self):
        rng = np.random.default_rng(9)
        X, y = random_design(rng)
        w = rng.random(len(y)) + 0.1
        fitted = fit(spec("gbt", hyperparameters={"rounds": 0}), X, y, weights=w)
        expected = np.average(y, weights=w)
        np.testing.assert_allclose(predict(fitted, X), expected, atol=1e-12)

    def test_zero_rounds_binary_is_prevalence(self):
        X = np.zeros((10, 2))
        y = np.array([1.0] * 3 + [0.0] * 7)
        fitted = fit(
            spec("gbt", hyperparameters={"rounds": 0}, outcome_mode="binary"), X, y
        )
        np.testing.assert_allclose(predict(fitted, X), 0.3, atol=1e-12)

    def test_training_loss_non_increasing(self):
        rng = np.random.default_rng(10)
        X, y = random_design(rng, n=80, p=3)
        w = normalized_weights(len(y), None)
        history: list = []
        fit_gbt(X, y, w, n_rounds=30, max_depth=2, shrinkage=0.2, min_leaf=3,
                loss_history=history)
        assert all(a >= b - 1e-12 for a, b in zip(history, history[1:]))

    def test_rerun_bit_identical(self):
        rng = np.random.default_rng(11)
        X, y = random_design(rng, n=60, p=4)
        a = fit(spec("gbt", hyperparameters={"rounds": 10}), X, y, seed=5)
        b = fit(spec("gbt", hyperparameters={"rounds": 10}), X, y, seed=5)
        grid = rng.normal(size=(10, 4))
        assert np.array_equal(predict(a, grid), predict(b, grid))

    def test_binary_probabilities_bounded(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(60, 3))
        y = (X[:, 0] > 0).astype(float)
        fitted = fit(
            spec("gbt", hyperparameters={"rounds": 20}, outcome_mode="binary"), X, y
        )
        probs = predict(fitted, X)
        assert np.all((probs >= 0) & (probs <= 1))


class TestScreening:
    def _oracle_single_split_gain(self, x, y):
        """Best single-split variance reduction for one feature, brute force."""
        order = np.argsort(x, kind="stable")
        xs, ys = x[order], y[order]
        n = len(y)
        total_sse = np.sum((ys - ys.mean()) ** 2)
        best = 0.0
        for cut in range(1, n):
            if xs[cut] == xs[cut - 1]:
                continue
            left, right = ys[:cut], ys[cut:]
            sse = np.sum((left - left.mean()) ** 2) + np.sum(
                (right - right.mean()) ** 2
            )
            best = max(best, total_sse - sse)
        return best

    def test_copy_feature_wins(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(200, 5))
        y = X[:, 3].copy()
        report = rf_importance_screen(X, y, k=1, n_trees=25, seed=0)
        assert report.selected == (3,)
        oracle = [self._oracle_single_split_gain(X[:, j], y) for j in range(5)]
        assert int(np.argmax(oracle)) == 3

    def test_k_equals_arity_returns_all(self):
        rng = np.random.default_rng(14)
        X = rng.normal(size=(50, 4))
        y = X @ np.array([1.0, 0.5, 0.25, 0.125])
        report = rf_importance_screen(X, y, k=4, n_trees=10, seed=1)
        assert sorted(report.selected) == [0, 1, 2, 3]

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(60, 4))
        y = rng.normal(size=60)
        a = rf_importance_screen(X, y, k=2, n_trees=15, seed=9)
        b = rf_importance_screen(X, y, k=2, n_trees=15, seed=9)
        assert a.selected == b.selected
        np.testing.assert_array_equal(a.importances, b.importances)

    def test_k_exceeding_arity_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            rf_importance_screen(np.zeros((10, 2)), np.zeros(10), k=3, n_trees=2)

    def test_screened_fit_ignores_unselected_columns(self):
        rng = np.random.default_rng(16)
        X = rng.normal(size=(120, 6))
        y = 2.0 * X[:, 1] - X[:, 4] + 0.01 * rng.normal(size=120)
        fitted = fit(
            spec(
                "linear",
                screened=True,
                hyperparameters={"screen_k": 2, "screen_trees": 25},
            ),
            X, y, seed=3,
        )
        assert fitted.selected_features is not None
        grid = rng.normal(size=(8, 6))
        base = predict(fitted, grid)
        perturbed = grid.copy()
        untouched = [j for j in range(6) if j not in fitted.selected_features]
        perturbed[:, untouched] += 100.0
        np.testing.assert_array_equal(base, predict(fitted, perturbed))


class TestContract:
    def test_empty_input_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            fit(spec("mean"), np.zeros((0, 2)), [])

    def test_binary_requires_01_targets(self):
        with pytest.raises(ValueError, match="binary"):
            fit(spec("linear", outcome_mode="binary"), np.zeros((3, 1)), [0.0, 0.5, 1.0])

    def test_arity_mismatch_rejected(self):
        fitted = fit(spec("linear"), np.zeros((4, 3)), np.arange(4.0))
        with pytest.raises(ValueError, match="arity"):
            predict(fitted, np.zeros((2, 5)))

    def test_non_converged_refuses_prediction(self):
        fitted = FittedLearner(
            spec=spec("linear"), parameters={"coef": np.zeros(2)},
            n_features=1, converged=False,
        )
        with pytest.raises(ValueError, match="non-converged"):
            predict(fitted, np.zeros((1, 1)))

    def test_negative_penalty_rejected(self):
        with pytest.raises(ValueError, match="penalty"):
            spec("ridge", hyperparameters={"penalty": -1.0})


class TestSerialization:
    @pytest.mark.parametrize(
        "family,hyper",
        [
            ("mean", {}),
            ("linear", {}),
            ("ridge", {"penalty": 2.0}),
            ("lasso", {"penalty": 0.05}),
            ("hinge_spline", {"max_basis": 4}),
            ("gbt", {"rounds": 5}),
        ],
    )
    def test_round_trip_exact(self, family, hyper):
        rng = np.random.default_rng(17)
        X, y = random_design(rng, n=50, p=3)
        fitted = fit(spec(family, hyperparameters=hyper), X, y, seed=2)
        again = load_learner(dump_learner(fitted))
        grid = rng.normal(size=(12, 3))
        np.testing.assert_array_equal(predict(fitted, grid), predict(again, grid))
        assert fitted_to_dict(again) == fitted_to_dict(fitted_from_dict(fitted_to_dict(fitted)))
