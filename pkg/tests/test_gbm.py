"""Boosted-ensemble internals: gradients, tree fitting, boosting, persistence."""
from __future__ import annotations

import math

import numpy as np
import pytest

from botscreen.corpus import Label
from botscreen.errors import DataError
from botscreen.gbm import (EXP_ARG_CLAMP, LEAF_VALUE_CLAMP, GbmConfig, GbmModel,
                           exponential_loss, fit_gbm, fit_tree, load_gbm,
                           neg_gradient, predict_label, predict_margin,
                           predict_prob, save_gbm)


class TestGradient:
    def test_hand_values(self):
        assert neg_gradient(np.array([1.0]), np.array([0.0]))[0] == 1.0
        assert neg_gradient(np.array([-1.0]), np.array([0.0]))[0] == -1.0
        assert neg_gradient(np.array([1.0]), np.array([0.5]))[0] == \
            pytest.approx(math.exp(-0.5))
        assert neg_gradient(np.array([-1.0]), np.array([0.5]))[0] == \
            pytest.approx(-math.exp(0.5))

    def test_exponent_clamped(self):
        huge = neg_gradient(np.array([1.0]), np.array([-100.0]))[0]
        assert huge == math.exp(EXP_ARG_CLAMP)
        tiny = neg_gradient(np.array([1.0]), np.array([100.0]))[0]
        assert tiny == math.exp(-EXP_ARG_CLAMP)

    def test_matches_finite_differences(self):
        # d/dF exp(-y F) = -y exp(-y F); the pseudo-residual is its negation
        rng = np.random.default_rng(0)
        n = 10_000
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        F = rng.uniform(-3.0, 3.0, size=n)
        h = 1e-6
        numeric = (np.exp(-y * (F + h)) - np.exp(-y * (F - h))) / (2 * h)
        analytic = -neg_gradient(y, F)
        rel = np.abs(numeric - analytic) / np.maximum(np.abs(analytic), 1e-12)
        assert rel.max() <= 1e-5

    def test_loss_hand_value(self):
        assert exponential_loss(np.array([1.0, -1.0]), np.zeros(2)) == 2.0


UNIT = GbmConfig(n_estimators=1, max_depth=1)


class TestFitTree:
    def test_constant_residuals_single_leaf(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        tree = fit_tree(X, np.full(4, 0.5), np.ones(4), UNIT)
        assert tree.n_nodes == 1
        assert tree.feature[0] == -1
        assert tree.value[0] == 0.5
        assert tree.predict(X).tolist() == [0.5] * 4

    def test_stump_standard_example(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        r = np.array([-1.0, -1.0, 1.0, 1.0])
        tree = fit_tree(X, r, np.ones(4), UNIT)
        assert tree.feature[0] == 0
        assert tree.threshold[0] == 2.5
        assert tree.predict(X).tolist() == [-1.0, -1.0, 1.0, 1.0]

    def test_boundary_point_goes_left(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        r = np.array([-1.0, -1.0, 1.0, 1.0])
        tree = fit_tree(X, r, np.ones(4), UNIT)
        assert tree.predict(np.array([[2.5]]))[0] == -1.0
        assert tree.predict(np.array([[2.5000001]]))[0] == 1.0

    def test_feature_tie_breaks_low_index(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0]])  # identical columns, equal gain
        tree = fit_tree(X, np.array([-1.0, 1.0]), np.ones(2), UNIT)
        assert tree.feature[0] == 0

    def test_threshold_tie_breaks_smallest(self):
        # symmetric residuals: cutting at 1.5 or 3.5 gives identical gain
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        r = np.array([1.0, -1.0, -1.0, 1.0])
        tree = fit_tree(X, r, np.ones(4), UNIT)
        assert tree.threshold[0] == 1.5

    def test_min_samples_leaf_blocks_narrow_splits(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        r = np.array([-1.0, -1.0, 1.0, 1.0])
        ok = fit_tree(X, r, np.ones(4), GbmConfig(max_depth=1, min_samples_leaf=2))
        assert ok.threshold[0] == 2.5  # 2|2 split allowed
        blocked = fit_tree(X, r, np.ones(4), GbmConfig(max_depth=1, min_samples_leaf=3))
        assert blocked.n_nodes == 1  # 4 rows cannot make two leaves of 3

    def test_min_samples_leaf_shifts_cut(self):
        # best unconstrained cut is 1|3; with min_leaf=2 the 2|2 cut wins
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        r = np.array([-9.0, 1.0, 1.0, 1.0])
        free = fit_tree(X, r, np.ones(4), UNIT)
        assert free.threshold[0] == 1.5
        constrained = fit_tree(X, r, np.ones(4),
                               GbmConfig(max_depth=1, min_samples_leaf=2))
        assert constrained.threshold[0] == 2.5

    def test_leaf_value_is_weighted_newton_step(self):
        X = np.array([[0.0], [0.0]])  # no split possible
        tree = fit_tree(X, np.array([2.0, 1.0]), np.array([4.0, 1.0]), UNIT)
        assert tree.value[0] == pytest.approx(3.0 / 5.0)

    def test_leaf_clamp(self):
        X = np.array([[0.0], [1.0]])
        tree = fit_tree(X, np.array([100.0, 100.0]), np.ones(2), UNIT)
        assert tree.value[0] == LEAF_VALUE_CLAMP

    def test_deep_tree_fits_distinct_points_exactly(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        r = np.array([-1.0, 1.0, 2.0, 4.0])
        tree = fit_tree(X, r, np.ones(4), GbmConfig(max_depth=3))
        assert np.allclose(tree.predict(X), r)

    def test_validation(self):
        X = np.array([[1.0], [2.0]])
        with pytest.raises(DataError, match="positive"):
            fit_tree(X, np.ones(2), np.array([1.0, 0.0]))
        with pytest.raises(DataError, match="align"):
            fit_tree(X, np.ones(3), np.ones(2))
        with pytest.raises(DataError):
            fit_tree(np.zeros((0, 1)), np.zeros(0), np.zeros(0))


def clusters(n_pos=100, n_neg=100, seed=0, sd=0.5):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(2.0, sd, size=(n_pos, 2)),
                   rng.normal(-2.0, sd, size=(n_neg, 2))])
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    return X, y


class TestFitGbm:
    def test_balanced_prior_is_zero(self):
        X, y = clusters(50, 50)
        model = fit_gbm(X, y, GbmConfig(n_estimators=1))
        assert model.f0 == 0.0

    def test_prior_is_half_log_odds(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([1.0, 1.0, 1.0, -1.0])
        model = fit_gbm(X, y, GbmConfig(n_estimators=1))
        assert model.f0 == pytest.approx(0.5 * math.log(3.0))

    def test_separable_data_classified_correctly(self):
        X, y = clusters(seed=1)
        model = fit_gbm(X, y, GbmConfig(n_estimators=30, max_depth=2))
        margins = predict_margin(model, X)
        assert (np.sign(margins) == y).mean() >= 0.99

    def test_training_loss_recorded_and_non_increasing(self):
        X, y = clusters(60, 40, seed=2, sd=1.5)
        model = fit_gbm(X, y, GbmConfig(n_estimators=40))
        assert len(model.training_loss) == 41
        diffs = np.diff(model.training_loss)
        assert (diffs <= 1e-9 * np.abs(model.training_loss[:-1])).all()
        assert model.training_loss[-1] < model.training_loss[0]

    def test_constant_features_keep_prior(self):
        X = np.zeros((8, 3))
        y = np.array([1.0, -1.0] * 4)
        model = fit_gbm(X, y, GbmConfig(n_estimators=5))
        margins = predict_margin(model, X)
        assert np.array_equal(margins, np.zeros(8))
        assert predict_prob(model, X).tolist() == [0.5] * 8

    def test_deterministic(self):
        X, y = clusters(seed=3)
        m1 = fit_gbm(X, y, GbmConfig(n_estimators=10))
        m2 = fit_gbm(X, y, GbmConfig(n_estimators=10))
        assert np.array_equal(predict_margin(m1, X), predict_margin(m2, X))
        assert m1.training_loss == m2.training_loss

    def test_shorter_fit_is_a_prefix_of_longer(self):
        X, y = clusters(40, 40, seed=4, sd=1.0)
        short = fit_gbm(X, y, GbmConfig(n_estimators=10))
        long = fit_gbm(X, y, GbmConfig(n_estimators=25))
        truncated = GbmModel(f0=long.f0, trees=long.trees[:10],
                             learning_rate=long.learning_rate, config=long.config,
                             schema_names=long.schema_names,
                             schema_version=long.schema_version)
        assert np.array_equal(predict_margin(short, X),
                              predict_margin(truncated, X))

    def test_default_schema_names(self):
        X, y = clusters(10, 10)
        model = fit_gbm(X, y, GbmConfig(n_estimators=1))
        assert model.schema_names == ("f0", "f1")

    @pytest.mark.parametrize("y, fragment", [
        (np.ones(4), "single class"),
        (np.array([0.0, 1.0, 1.0, -1.0]), "-1"),
    ])
    def test_label_validation(self, y, fragment):
        X = np.arange(8, dtype=np.float64).reshape(4, 2)
        with pytest.raises(DataError, match=fragment):
            fit_gbm(X, y, GbmConfig(n_estimators=1))

    def test_nan_and_shape_validation(self):
        X = np.array([[1.0, np.nan], [0.0, 1.0]])
        with pytest.raises(DataError, match="impute"):
            fit_gbm(X, np.array([1.0, -1.0]), GbmConfig(n_estimators=1))
        with pytest.raises(DataError, match="schema_names"):
            fit_gbm(np.zeros((2, 2)), np.array([1.0, -1.0]),
                    GbmConfig(n_estimators=1), schema_names=("a",))

    def test_config_validation(self):
        with pytest.raises(DataError):
            GbmConfig(n_estimators=0)
        with pytest.raises(DataError):
            GbmConfig(learning_rate=0.0)
        with pytest.raises(DataError, match="exponential"):
            GbmConfig(loss="squared")
        with pytest.raises(DataError):
            GbmConfig(max_depth=0)
        with pytest.raises(DataError):
            GbmConfig(min_samples_leaf=0)


@pytest.fixture(scope="module")
def model():
    X, y = clusters(seed=5)
    return fit_gbm(X, y, GbmConfig(n_estimators=20)), X


class TestPredict:
    def test_prob_matches_link(self, model):
        gbm, X = model
        F = predict_margin(gbm, X)
        assert np.allclose(predict_prob(gbm, X), 1.0 / (1.0 + np.exp(-2.0 * F)))

    def test_prob_stable_at_extreme_margins(self, model):
        gbm, _ = model
        big = GbmModel(f0=500.0, trees=[], learning_rate=0.1, config=gbm.config,
                       schema_names=("a",), schema_version="1")
        assert predict_prob(big, np.array([[0.0]]))[0] == 1.0
        small = GbmModel(f0=-500.0, trees=[], learning_rate=0.1, config=gbm.config,
                         schema_names=("a",), schema_version="1")
        assert predict_prob(small, np.array([[0.0]]))[0] == 0.0

    def test_zero_margin_is_bot(self):
        zero = GbmModel(f0=0.0, trees=[], learning_rate=0.1,
                        config=GbmConfig(n_estimators=1), schema_names=("a",),
                        schema_version="1")
        assert predict_label(zero, np.array([[1.0]])) == [Label.BOT]

    def test_labels_follow_margin_sign(self, model):
        gbm, X = model
        F = predict_margin(gbm, X)
        labels = predict_label(gbm, X)
        for m, lab in zip(F, labels):
            assert lab is (Label.BOT if m >= 0 else Label.NON_BOT)

    def test_single_row_input(self, model):
        gbm, X = model
        assert predict_margin(gbm, X[0]) == pytest.approx(predict_margin(gbm, X)[0])

    def test_width_mismatch(self, model):
        gbm, _ = model
        with pytest.raises(DataError, match="expects"):
            predict_margin(gbm, np.zeros((3, 5)))


class TestSerialization:
    def test_round_trip_bitwise_margins(self, tmp_path):
        X, y = clusters(30, 30, seed=6)
        model = fit_gbm(X, y, GbmConfig(n_estimators=15, max_depth=2),
                        schema_names=("alpha", "beta"),
                        standardization={"median": [0.0, 0.0]})
        path = tmp_path / "model.json"
        save_gbm(model, path)
        again = load_gbm(path)
        assert np.array_equal(predict_margin(again, X), predict_margin(model, X))
        assert again.schema_names == ("alpha", "beta")
        assert again.config == model.config
        assert again.standardization == {"median": [0.0, 0.0]}
        assert again.training_loss == model.training_loss

    def test_malformed_files(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{nope")
        with pytest.raises(DataError, match="invalid model JSON"):
            load_gbm(path)
        path.write_text('{"f0": 0.0}')
        with pytest.raises(DataError, match="malformed"):
            load_gbm(path)
