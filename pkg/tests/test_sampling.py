"""Minority oversampling: counts, interpolation geometry, determinism, audit."""
from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from botscreen.errors import DataError
from botscreen.sampling import SmoteConfig, _nearest_neighbors, smote_rebalance


def two_cluster_data(n_min=10, n_maj=90, dims=4, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(3.0, 0.5, size=(n_min, dims)),
                   rng.normal(-3.0, 0.5, size=(n_maj, dims))])
    y = np.concatenate([np.ones(n_min, dtype=np.int64),
                        -np.ones(n_maj, dtype=np.int64)])
    return X, y


class TestConfig:
    def test_validation(self):
        with pytest.raises(DataError):
            SmoteConfig(k_neighbors=0)
        with pytest.raises(DataError):
            SmoteConfig(target_ratio=0.0)
        with pytest.raises(DataError):
            SmoteConfig(target_ratio=1.5)

    def test_defaults(self):
        config = SmoteConfig()
        assert config.k_neighbors == 5 and config.target_ratio == 1.0


class TestNearestNeighbors:
    def test_known_line(self):
        points = np.array([[0.0], [1.0], [3.0], [7.0]])
        nn = _nearest_neighbors(points, 2)
        assert nn.tolist() == [[1, 2], [0, 2], [1, 0], [2, 1]]

    def test_self_excluded(self):
        points = np.zeros((4, 2))  # all identical; distances 0 but not self
        nn = _nearest_neighbors(points, 3)
        for i in range(4):
            assert i not in nn[i]

    def test_tie_break_is_stable_by_index(self):
        points = np.array([[0.0], [1.0], [-1.0]])  # rows 1 and 2 tie from row 0
        nn = _nearest_neighbors(points, 2)
        assert nn[0].tolist() == [1, 2]


class TestCounts:
    def test_ten_ninety_appends_eighty(self):
        X, y = two_cluster_data(10, 90)
        result = smote_rebalance(X, y, SmoteConfig(seed=1))
        assert result.n_synthetic == 80
        assert result.X.shape == (180, 4)
        assert (result.y == 1).sum() == 90 and (result.y == -1).sum() == 90

    def test_low_ratio_is_a_no_op(self):
        X, y = two_cluster_data(10, 90)
        result = smote_rebalance(X, y, SmoteConfig(target_ratio=0.1))
        assert result.n_synthetic == 0
        assert np.array_equal(result.X, X) and np.array_equal(result.y, y)
        assert result.parent_a.size == 0 and result.u.size == 0

    def test_already_balanced_is_a_no_op(self):
        X, y = two_cluster_data(50, 50)
        result = smote_rebalance(X, y, SmoteConfig())
        assert result.n_synthetic == 0

    @settings(max_examples=60, deadline=None)
    @given(n_min=st.integers(6, 30), n_maj=st.integers(30, 120),
           ratio=st.floats(0.05, 1.0))
    def test_count_formula(self, n_min, n_maj, ratio):
        X, y = two_cluster_data(n_min, n_maj, seed=2)
        result = smote_rebalance(X, y, SmoteConfig(target_ratio=ratio, seed=3))
        expected = max(math.ceil(ratio * n_maj) - n_min, 0)
        assert result.n_synthetic == expected
        assert result.X.shape[0] == n_min + n_maj + expected

    def test_minority_not_larger_than_k_rejected(self):
        X, y = two_cluster_data(5, 95)
        with pytest.raises(DataError, match="lower k_neighbors"):
            smote_rebalance(X, y, SmoteConfig(k_neighbors=5))

    def test_single_class_rejected(self):
        X = np.zeros((10, 2))
        with pytest.raises(DataError, match="two classes"):
            smote_rebalance(X, np.ones(10))

    def test_nan_rejected(self):
        X, y = two_cluster_data(10, 90)
        X[0, 0] = np.nan
        with pytest.raises(DataError, match="impute"):
            smote_rebalance(X, y)

    def test_misaligned_rejected(self):
        with pytest.raises(DataError):
            smote_rebalance(np.zeros((4, 2)), np.zeros(3))
        with pytest.raises(DataError):
            smote_rebalance(np.zeros(4), np.zeros(4))


class TestGeometry:
    def test_originals_pass_through_bitwise(self):
        X, y = two_cluster_data(10, 90)
        result = smote_rebalance(X, y, SmoteConfig(seed=5))
        assert np.array_equal(result.X[:100], X)
        assert np.array_equal(result.y[:100], y)

    def test_synthetic_rows_are_convex_combinations(self):
        X, y = two_cluster_data(12, 60, dims=6, seed=7)
        result = smote_rebalance(X, y, SmoteConfig(seed=8))
        assert result.n_synthetic == 48
        synthetic = result.X[len(y):]
        expected = (X[result.parent_a]
                    + result.u[:, None] * (X[result.parent_b] - X[result.parent_a]))
        assert np.allclose(synthetic, expected, atol=1e-9)
        assert ((0.0 <= result.u) & (result.u < 1.0)).all()

    def test_two_point_segment_collinearity(self):
        # exactly two minority points: every synthetic row lies on their segment
        X = np.vstack([[[0.0, 0.0]], [[2.0, 4.0]], np.random.default_rng(0).normal(
            10.0, 0.1, size=(8, 2))])
        y = np.array([1, 1, 0, 0, 0, 0, 0, 0, 0, 0])
        result = smote_rebalance(X, y, SmoteConfig(k_neighbors=1, seed=4))
        assert result.n_synthetic == 6
        synthetic = result.X[10:]
        # on the segment: s = t * (2, 4) with t in [0, 1)
        t = synthetic[:, 0] / 2.0
        assert np.allclose(synthetic[:, 1], 4.0 * t, atol=1e-12)
        assert ((0.0 <= t) & (t < 1.0)).all()

    def test_synthetic_rows_inside_minority_bounding_box(self):
        X, y = two_cluster_data(15, 75, dims=3, seed=9)
        result = smote_rebalance(X, y, SmoteConfig(seed=10))
        minority = X[y == 1]
        synthetic = result.X[len(y):]
        assert (synthetic >= minority.min(axis=0) - 1e-12).all()
        assert (synthetic <= minority.max(axis=0) + 1e-12).all()

    def test_parents_are_minority_rows(self):
        X, y = two_cluster_data(10, 40)
        result = smote_rebalance(X, y, SmoteConfig(seed=11))
        minority_rows = set(np.flatnonzero(y == 1))
        assert set(result.parent_a) <= minority_rows
        assert set(result.parent_b) <= minority_rows
        assert (result.parent_a != result.parent_b).all()

    def test_parent_b_is_among_k_nearest_of_parent_a(self):
        X, y = two_cluster_data(10, 40, seed=13)
        k = 3
        result = smote_rebalance(X, y, SmoteConfig(k_neighbors=k, seed=14))
        minority_idx = np.flatnonzero(y == 1)
        nn = _nearest_neighbors(X[minority_idx], k)
        position = {int(v): i for i, v in enumerate(minority_idx)}
        for a, b in zip(result.parent_a, result.parent_b):
            assert position[int(b)] in nn[position[int(a)]]


class TestDeterminism:
    def test_same_seed_same_output(self):
        X, y = two_cluster_data(10, 90)
        r1 = smote_rebalance(X, y, SmoteConfig(seed=21))
        r2 = smote_rebalance(X, y, SmoteConfig(seed=21))
        assert np.array_equal(r1.X, r2.X)
        assert np.array_equal(r1.parent_a, r2.parent_a)
        assert np.array_equal(r1.u, r2.u)

    def test_different_seed_different_rows(self):
        X, y = two_cluster_data(10, 90)
        r1 = smote_rebalance(X, y, SmoteConfig(seed=21))
        r2 = smote_rebalance(X, y, SmoteConfig(seed=22))
        assert not np.array_equal(r1.X, r2.X)


class TestAudit:
    def test_audit_file_lines_replay_the_interpolation(self, tmp_path):
        X, y = two_cluster_data(8, 24, dims=2, seed=15)
        result = smote_rebalance(X, y, SmoteConfig(k_neighbors=3, seed=16))
        path = tmp_path / "audit.jsonl"
        result.write_audit(path)
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert len(lines) == result.n_synthetic
        for row, line in zip(result.X[len(y):], lines):
            a, b, u = line["parent_a"], line["parent_b"], line["u"]
            assert np.allclose(row, X[a] + u * (X[b] - X[a]), atol=1e-9)
