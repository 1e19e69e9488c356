"""Gradient boosting with exponential loss over regression-tree base learners.

Margin formulation with y in {-1,+1}: L(y,F) = exp(-y*F), pseudo-residual
r = y*exp(-y*F), per-example weight w = exp(-y*F). The initial margin is the
class-prior half log-odds; each round fits a CART regression tree whose leaf
values take one clamped Newton step sum(r)/sum(w), then F <- F + lr * tree(x).
Predicted probability uses the exponential-loss link p = 1/(1 + exp(-2F)).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Label
from .errors import DataError

EXP_ARG_CLAMP = 30.0
LEAF_VALUE_CLAMP = 4.0
_GAIN_EPS = 1e-12


@dataclass(frozen=True)
class GbmConfig:
    n_estimators: int = 200
    learning_rate: float = 0.1
    loss: str = "exponential"
    max_depth: int = 3
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_estimators < 1:
            raise DataError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if self.learning_rate <= 0:
            raise DataError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.loss != "exponential":
            raise DataError(f"unsupported loss {self.loss!r}; only 'exponential'")
        if self.max_depth < 1:
            raise DataError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise DataError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")


@dataclass
class RegressionTree:
    """Array-encoded binary tree. feature[i] >= 0 marks an internal node
    (rule: go left iff x[feature] <= threshold); feature[i] == -1 marks a
    leaf whose prediction is value[i]. Node 0 is the root."""
    feature: np.ndarray    # int32
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # float64

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.float64)
        # Vectorized descent: split index groups at each internal node.
        stack: list[tuple[int, np.ndarray]] = [(0, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            if self.feature[node] < 0:
                out[idx] = self.value[node]
                continue
            go_left = X[idx, self.feature[node]] <= self.threshold[node]
            stack.append((int(self.left[node]), idx[go_left]))
            stack.append((int(self.right[node]), idx[~go_left]))
        return out


def neg_gradient(y: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Pseudo-residual y*exp(-y*F) with the exponent clamped to +/-30."""
    y = np.asarray(y, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    return y * np.exp(np.clip(-y * F, -EXP_ARG_CLAMP, EXP_ARG_CLAMP))


def _hessian_weights(y: np.ndarray, F: np.ndarray) -> np.ndarray:
    return np.exp(np.clip(-np.asarray(y, dtype=np.float64) * np.asarray(F, dtype=np.float64),
                          -EXP_ARG_CLAMP, EXP_ARG_CLAMP))


def _leaf_value(residuals: np.ndarray, weights: np.ndarray) -> float:
    return float(np.clip(residuals.sum() / weights.sum(), -LEAF_VALUE_CLAMP, LEAF_VALUE_CLAMP))


def _best_split(X: np.ndarray, r: np.ndarray, w: np.ndarray,
                min_leaf: int) -> tuple[int, float, float] | None:
    """Best (feature, threshold, gain) by weighted-SSE reduction, or None.

    Score of a node is (sum r)^2 / (sum w); gain = S_left + S_right - S_node.
    Ties break toward the lowest feature index, then the smallest threshold
    (ascending scan with strict improvement).
    """
    n = X.shape[0]
    total_r = r.sum()
    total_w = w.sum()
    s_parent = total_r * total_r / total_w
    best: tuple[int, float, float] | None = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cum_r = np.cumsum(r[order])
        cum_w = np.cumsum(w[order])
        # Split after position i: left = sorted[:i+1], right = sorted[i+1:].
        i = np.arange(n - 1)
        valid = (xs[:-1] < xs[1:]) & (i + 1 >= min_leaf) & (n - i - 1 >= min_leaf)
        if not valid.any():
            continue
        s_left = cum_r[:-1] ** 2 / cum_w[:-1]
        s_right = (total_r - cum_r[:-1]) ** 2 / (total_w - cum_w[:-1])
        gains = np.where(valid, s_left + s_right - s_parent, -np.inf)
        k = int(np.argmax(gains))  # first occurrence -> smallest threshold
        gain = float(gains[k])
        if gain <= _GAIN_EPS * max(1.0, abs(s_parent)):
            continue
        if best is None or gain > best[2]:
            threshold = (xs[k] + xs[k + 1]) / 2.0
            best = (j, float(threshold), gain)
    return best


def fit_tree(X: np.ndarray, residuals: np.ndarray, weights: np.ndarray,
             config: GbmConfig = GbmConfig()) -> RegressionTree:
    """Greedy CART regression tree on (residuals, weights); leaves take one
    Newton step sum(r)/sum(w) clamped to +/-4."""
    X = np.asarray(X, dtype=np.float64)
    residuals = np.asarray(residuals, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DataError("fit_tree requires a non-empty 2-D X")
    if residuals.shape != (X.shape[0],) or weights.shape != (X.shape[0],):
        raise DataError("residuals and weights must align with X rows")
    if not (weights > 0).all():
        raise DataError("all weights must be positive")

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        r, w = residuals[idx], weights[idx]
        split = None
        if depth < config.max_depth and idx.size >= 2 * config.min_samples_leaf:
            split = _best_split(X[idx], r, w, config.min_samples_leaf)
        if split is None:
            value[node] = _leaf_value(r, w)
            return node
        j, t, _ = split
        feature[node] = j
        threshold[node] = t
        go_left = X[idx, j] <= t
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return RegressionTree(feature=np.asarray(feature, dtype=np.int32),
                          threshold=np.asarray(threshold, dtype=np.float64),
                          left=np.asarray(left, dtype=np.int32),
                          right=np.asarray(right, dtype=np.int32),
                          value=np.asarray(value, dtype=np.float64))


@dataclass
class GbmModel:
    f0: float
    trees: list[RegressionTree]
    learning_rate: float
    config: GbmConfig
    schema_names: tuple[str, ...]
    schema_version: str
    standardization: dict | None = None  # serialized stats travel with the model
    training_loss: tuple[float, ...] = field(default_factory=tuple)


def exponential_loss(y: np.ndarray, F: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    return float(np.exp(np.clip(-y * F, -EXP_ARG_CLAMP, EXP_ARG_CLAMP)).sum())


def fit_gbm(X: np.ndarray, y: np.ndarray, config: GbmConfig = GbmConfig(),
            schema_names: tuple[str, ...] | None = None,
            schema_version: str = "1",
            standardization: dict | None = None) -> GbmModel:
    """Boost for n_estimators rounds from the class-prior half log-odds."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DataError("X must be 2-D with one label per row")
    if np.isnan(X).any():
        raise DataError("X contains missing values; impute before fitting")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise DataError("labels must be encoded as -1 (non-bot) / +1 (bot)")
    n_pos = int((y > 0).sum())
    n_neg = int((y < 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("training data contains a single class; need both bot and non-bot")
    if schema_names is None:
        schema_names = tuple(f"f{j}" for j in range(X.shape[1]))
    if len(schema_names) != X.shape[1]:
        raise DataError("schema_names length must match the feature count")

    f0 = 0.5 * math.log(n_pos / n_neg)
    F = np.full(X.shape[0], f0, dtype=np.float64)
    trees: list[RegressionTree] = []
    losses = [exponential_loss(y, F)]
    for _ in range(config.n_estimators):
        r = neg_gradient(y, F)
        w = _hessian_weights(y, F)
        tree = fit_tree(X, r, w, config)
        trees.append(tree)
        F = F + config.learning_rate * tree.predict(X)
        losses.append(exponential_loss(y, F))
    return GbmModel(f0=f0, trees=trees, learning_rate=config.learning_rate,
                    config=config, schema_names=schema_names,
                    schema_version=schema_version, standardization=standardization,
                    training_loss=tuple(losses))


def _check_width(model: GbmModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != len(model.schema_names):
        raise DataError(f"input has {X.shape[1]} features but the model expects "
                        f"{len(model.schema_names)}")
    return X


def predict_margin(model: GbmModel, X: np.ndarray) -> np.ndarray:
    """F(x) = F0 + lr * sum of tree outputs, accumulated in fixed tree order."""
    X2 = _check_width(model, X)
    F = np.full(X2.shape[0], model.f0, dtype=np.float64)
    for tree in model.trees:
        F = F + model.learning_rate * tree.predict(X2)
    return F


def predict_prob(model: GbmModel, X: np.ndarray) -> np.ndarray:
    """p(bot) = 1 / (1 + exp(-2F)), computed in a numerically stable form."""
    F = predict_margin(model, X)
    out = np.empty_like(F)
    pos = F >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-2.0 * F[pos]))
    e = np.exp(2.0 * F[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def predict_label(model: GbmModel, X: np.ndarray) -> list[Label]:
    """bot iff margin >= 0."""
    F = predict_margin(model, X)
    return [Label.BOT if m >= 0 else Label.NON_BOT for m in F]


def _tree_to_payload(tree: RegressionTree) -> dict:
    return {"feature": [int(v) for v in tree.feature],
            "threshold": [float(v) for v in tree.threshold],
            "left": [int(v) for v in tree.left],
            "right": [int(v) for v in tree.right],
            "value": [float(v) for v in tree.value]}


def _tree_from_payload(obj: dict) -> RegressionTree:
    return RegressionTree(feature=np.asarray(obj["feature"], dtype=np.int32),
                          threshold=np.asarray(obj["threshold"], dtype=np.float64),
                          left=np.asarray(obj["left"], dtype=np.int32),
                          right=np.asarray(obj["right"], dtype=np.int32),
                          value=np.asarray(obj["value"], dtype=np.float64))


def save_gbm(model: GbmModel, path: str | Path) -> None:
    payload = {
        "config": {
            "n_estimators": model.config.n_estimators,
            "learning_rate": model.config.learning_rate,
            "loss": model.config.loss,
            "max_depth": model.config.max_depth,
            "min_samples_leaf": model.config.min_samples_leaf,
            "seed": model.config.seed,
        },
        "f0": model.f0,
        "learning_rate": model.learning_rate,
        "schema": {"version": model.schema_version, "names": list(model.schema_names)},
        "standardization": model.standardization,
        "trees": [_tree_to_payload(t) for t in model.trees],
        "training_loss": list(model.training_loss),
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_gbm(path: str | Path) -> GbmModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid model JSON ({exc.msg})") from exc
    try:
        config = GbmConfig(**payload["config"])
        model = GbmModel(
            f0=float(payload["f0"]),
            trees=[_tree_from_payload(t) for t in payload["trees"]],
            learning_rate=float(payload["learning_rate"]),
            config=config,
            schema_names=tuple(payload["schema"]["names"]),
            schema_version=str(payload["schema"]["version"]),
            standardization=payload.get("standardization"),
            training_loss=tuple(float(v) for v in payload.get("training_loss", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed model payload ({exc})") from exc
    return model
