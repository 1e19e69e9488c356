"""Minority-class oversampling (SMOTE) in standardized feature space.

Each synthetic row interpolates between a uniformly chosen minority row and
one of its k nearest minority neighbors (exact brute-force Euclidean search):
s = x + u * (x_nn - x), u ~ Uniform(0,1). Parent indices and u are recorded
per synthetic row so the convex-combination property is directly auditable.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0  # minority/majority after augmentation
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k_neighbors < 1:
            raise DataError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if not 0.0 < self.target_ratio <= 1.0:
            raise DataError(f"target_ratio must be in (0,1], got {self.target_ratio}")


@dataclass
class SmoteResult:
    X: np.ndarray
    y: np.ndarray
    parent_a: np.ndarray  # row index into the input X (base point)
    parent_b: np.ndarray  # row index into the input X (neighbor)
    u: np.ndarray         # interpolation coefficient per synthetic row

    @property
    def n_synthetic(self) -> int:
        return int(self.parent_a.size)

    def write_audit(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for a, b, u in zip(self.parent_a, self.parent_b, self.u):
                fh.write(json.dumps({"parent_a": int(a), "parent_b": int(b),
                                     "u": float(u)}) + "\n")


def _nearest_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of each row's k nearest rows (self excluded), by Euclidean
    distance with stable tie order."""
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k]


def smote_rebalance(X: np.ndarray, y: np.ndarray, config: SmoteConfig = SmoteConfig()) -> SmoteResult:
    """Append synthetic minority rows until minority/majority reaches the
    target ratio; original rows are passed through unchanged."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DataError("X must be 2-D and aligned with 1-D y")
    if np.isnan(X).any():
        raise DataError("X contains missing values; impute before oversampling")
    values, counts = np.unique(y, return_counts=True)
    if values.size != 2:
        raise DataError(f"SMOTE needs exactly two classes, got {values.size}")
    minority_value = values[np.argmin(counts)]
    minority_count = int(counts.min())
    majority_count = int(counts.max())

    n_synthetic = math.ceil(config.target_ratio * majority_count) - minority_count
    if n_synthetic <= 0:
        empty = np.zeros(0, dtype=np.int64)
        return SmoteResult(X=X.copy(), y=y.copy(), parent_a=empty, parent_b=empty,
                           u=np.zeros(0, dtype=np.float64))
    if minority_count <= config.k_neighbors:
        raise DataError(f"minority class has {minority_count} rows but k_neighbors="
                        f"{config.k_neighbors}; lower k_neighbors below the minority count")

    minority_idx = np.flatnonzero(y == minority_value)
    minority_X = X[minority_idx]
    neighbors = _nearest_neighbors(minority_X, config.k_neighbors)

    rng = np.random.default_rng(config.seed)
    base = rng.integers(0, minority_count, size=n_synthetic)
    nn_pick = rng.integers(0, config.k_neighbors, size=n_synthetic)
    u = rng.random(n_synthetic)

    picked_nn = neighbors[base, nn_pick]
    synthetic = minority_X[base] + u[:, None] * (minority_X[picked_nn] - minority_X[base])

    X_out = np.vstack([X, synthetic])
    y_out = np.concatenate([y, np.full(n_synthetic, minority_value, dtype=y.dtype)])
    return SmoteResult(X=X_out, y=y_out,
                       parent_a=minority_idx[base].astype(np.int64),
                       parent_b=minority_idx[picked_nn].astype(np.int64),
                       u=u)
