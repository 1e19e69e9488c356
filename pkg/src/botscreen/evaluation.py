"""Evaluation: confusion counts, per-class precision/recall/F1 with macro
average, stratified k-fold cross-validation (fold-local standardization and
oversampling), and Cohen's kappa for annotator agreement.

The bot class is the positive class throughout; "macro" is the unweighted
mean over the two classes.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .corpus import Label
from .errors import DataError
from .features import FeatureMatrix, apply_standardization, fit_standardization
from .gbm import GbmConfig, GbmModel, fit_gbm, predict_label
from .sampling import SmoteConfig, smote_rebalance


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DataError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(labels: list[Label], predictions: list[Label]) -> ConfusionMatrix:
    """Counts with bot as the positive class."""
    if len(labels) != len(predictions):
        raise DataError(f"labels ({len(labels)}) and predictions ({len(predictions)}) "
                        "must have equal length")
    tp = fp = fn = tn = 0
    for truth, pred in zip(labels, predictions):
        if truth not in (Label.BOT, Label.NON_BOT) or pred not in (Label.BOT, Label.NON_BOT):
            raise DataError("confusion requires bot/non-bot labels only")
        if truth is Label.BOT:
            if pred is Label.BOT:
                tp += 1
            else:
                fn += 1
        else:
            if pred is Label.BOT:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


@dataclass(frozen=True)
class PrfTriple:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ClassMetrics:
    non_bot: PrfTriple
    bot: PrfTriple
    macro: PrfTriple
    degenerate: tuple[str, ...] = ()  # quantities whose denominator was zero


def f1_from_pr(precision: float, recall: float) -> float:
    """Harmonic mean, 0 when both components are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ratio(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics(cm: ConfusionMatrix) -> ClassMetrics:
    """Per-class precision/recall/F1 plus the unweighted two-class macro."""
    if cm.total == 0:
        raise DataError("empty confusion matrix")
    flags: list[str] = []
    bot_p = _ratio(cm.tp, cm.tp + cm.fp, "bot.precision", flags)
    bot_r = _ratio(cm.tp, cm.tp + cm.fn, "bot.recall", flags)
    nb_p = _ratio(cm.tn, cm.tn + cm.fn, "non_bot.precision", flags)
    nb_r = _ratio(cm.tn, cm.tn + cm.fp, "non_bot.recall", flags)
    bot = PrfTriple(bot_p, bot_r, f1_from_pr(bot_p, bot_r))
    non_bot = PrfTriple(nb_p, nb_r, f1_from_pr(nb_p, nb_r))
    macro = PrfTriple((nb_p + bot_p) / 2.0, (nb_r + bot_r) / 2.0,
                      (non_bot.f1 + bot.f1) / 2.0)
    return ClassMetrics(non_bot=non_bot, bot=bot, macro=macro, degenerate=tuple(flags))


def metrics_to_dict(cm: ConfusionMatrix, m: ClassMetrics) -> dict:
    def triple(t: PrfTriple) -> dict:
        return {"p": t.precision, "r": t.recall, "f1": t.f1}

    out = {
        "per_class": {"non_bot": triple(m.non_bot), "bot": triple(m.bot)},
        "macro": triple(m.macro),
        "confusion": {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn},
    }
    if m.degenerate:
        out["degenerate"] = list(m.degenerate)
    return out


def write_metrics_json(cm: ConfusionMatrix, m: ClassMetrics, path: str | Path) -> None:
    Path(path).write_text(json.dumps(metrics_to_dict(cm, m), indent=2) + "\n",
                          encoding="utf-8")


def labels_to_signs(labels: list[Label]) -> np.ndarray:
    """bot -> +1.0, non-bot -> -1.0."""
    out = np.empty(len(labels), dtype=np.float64)
    for i, lab in enumerate(labels):
        if lab is Label.BOT:
            out[i] = 1.0
        elif lab is Label.NON_BOT:
            out[i] = -1.0
        else:
            raise DataError(f"cannot encode label {lab.value!r}; filter to bot/non-bot first")
    return out


def stratified_folds(labels: list[Label], k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold assignment (values 0..k-1): per class, a seeded shuffle dealt
    round-robin, so per-class fold sizes differ by at most one."""
    if k < 2:
        raise DataError(f"k must be >= 2 (no held-out fold otherwise), got {k}")
    by_class: dict[Label, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    for lab, members in sorted(by_class.items(), key=lambda kv: kv[0].value):
        if len(members) < k:
            raise DataError(f"class {lab.value!r} has {len(members)} members; "
                            f"needs at least k={k}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(labels), dtype=np.int64)
    for lab in sorted(by_class, key=lambda c: c.value):
        members = np.array(by_class[lab], dtype=np.int64)
        rng.shuffle(members)
        for pos, idx in enumerate(members):
            assignment[idx] = pos % k
    return assignment


def _subset(matrix: FeatureMatrix, idx: np.ndarray) -> FeatureMatrix:
    return matrix.take(idx)


@dataclass(frozen=True)
class CvCandidate:
    config: GbmConfig
    fold_metrics: tuple[ClassMetrics, ...]
    mean_bot_f1: float


@dataclass(frozen=True)
class CvReport:
    folds: int
    seed: int
    candidates: tuple[CvCandidate, ...]
    selected_index: int
    selection: str = "mean bot-class F1"

    @property
    def selected(self) -> CvCandidate:
        return self.candidates[self.selected_index]


def default_grid(n_estimators: int = 200, learning_rate: float = 0.1,
                 seed: int = 0) -> tuple[GbmConfig, ...]:
    """Depth x leaf-size grid with the ensemble size and step fixed."""
    return tuple(GbmConfig(n_estimators=n_estimators, learning_rate=learning_rate,
                           max_depth=depth, min_samples_leaf=msl, seed=seed)
                 for depth in (1, 2, 3, 4) for msl in (1, 5, 20))


def cross_validate(matrix: FeatureMatrix, grid: tuple[GbmConfig, ...],
                   k: int = 5, seed: int = 0,
                   smote: SmoteConfig | None = SmoteConfig()) -> CvReport:
    """Stratified k-fold CV over candidate configs, selecting by mean bot-F1.

    Standardization and SMOTE are fitted/applied inside each fold on the
    training part only; the validation part keeps its raw class balance.
    Ties select the earliest candidate in grid order.
    """
    if not grid:
        raise DataError("cross_validate requires at least one candidate config")
    assignment = stratified_folds(matrix.labels, k, seed)
    candidates: list[CvCandidate] = []
    best_idx = 0
    for ci, config in enumerate(grid):
        fold_metrics: list[ClassMetrics] = []
        for fold in range(k):
            try:
                val_idx = np.flatnonzero(assignment == fold)
                train_idx = np.flatnonzero(assignment != fold)
                train_part = _subset(matrix, train_idx)
                val_part = _subset(matrix, val_idx)
                stats = fit_standardization(train_part)
                train_std = apply_standardization(train_part, stats)
                val_std = apply_standardization(val_part, stats)
                X_train = train_std.X
                y_train = labels_to_signs(train_std.labels)
                if smote is not None:
                    rebalanced = smote_rebalance(X_train, y_train,
                                                 replace(smote, seed=smote.seed + fold))
                    X_train, y_train = rebalanced.X, rebalanced.y
                model = fit_gbm(X_train, y_train, config,
                                schema_names=matrix.schema.names,
                                schema_version=matrix.schema.version)
                preds = predict_label(model, val_std.X)
                fold_metrics.append(metrics(confusion(val_std.labels, preds)))
            except DataError as exc:
                raise DataError(f"candidate {ci} fold {fold}: {exc}") from exc
        mean_f1 = float(np.mean([fm.bot.f1 for fm in fold_metrics]))
        candidates.append(CvCandidate(config=config, fold_metrics=tuple(fold_metrics),
                                      mean_bot_f1=mean_f1))
        if mean_f1 > candidates[best_idx].mean_bot_f1:
            best_idx = ci
    return CvReport(folds=k, seed=seed, candidates=tuple(candidates),
                    selected_index=best_idx)


def cv_report_to_dict(report: CvReport) -> dict:
    def config_dict(c: GbmConfig) -> dict:
        return {"n_estimators": c.n_estimators, "learning_rate": c.learning_rate,
                "loss": c.loss, "max_depth": c.max_depth,
                "min_samples_leaf": c.min_samples_leaf, "seed": c.seed}

    return {
        "folds": report.folds,
        "seed": report.seed,
        "selection": report.selection,
        "selected_index": report.selected_index,
        "candidates": [
            {
                "config": config_dict(c.config),
                "mean_bot_f1": c.mean_bot_f1,
                "fold_bot_f1": [fm.bot.f1 for fm in c.fold_metrics],
            }
            for c in report.candidates
        ],
    }


def write_cv_report_json(report: CvReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cv_report_to_dict(report), indent=2) + "\n",
                          encoding="utf-8")


@dataclass(frozen=True)
class KappaReport:
    categories: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]  # rows: annotator A, cols: annotator B
    p_observed: float
    p_expected: float
    kappa: float


def cohen_kappa(ann_a: list[str], ann_b: list[str]) -> KappaReport:
    """Chance-corrected agreement kappa = (p_o - p_e) / (1 - p_e); the
    all-agreement degenerate case (p_e = 1) is defined as kappa = 1."""
    if len(ann_a) != len(ann_b):
        raise DataError(f"annotation sequences differ in length "
                        f"({len(ann_a)} vs {len(ann_b)})")
    if not ann_a:
        raise DataError("annotation sequences are empty")
    categories = tuple(sorted(set(ann_a) | set(ann_b)))
    index = {c: i for i, c in enumerate(categories)}
    counts = np.zeros((len(categories), len(categories)), dtype=np.int64)
    for a, b in zip(ann_a, ann_b):
        counts[index[a], index[b]] += 1
    n = counts.sum()
    p_o = float(np.trace(counts) / n)
    p_a = counts.sum(axis=1) / n
    p_b = counts.sum(axis=0) / n
    p_e = float((p_a * p_b).sum())
    kappa = 1.0 if p_e == 1.0 else (p_o - p_e) / (1.0 - p_e)
    return KappaReport(categories=categories,
                       counts=tuple(tuple(int(v) for v in row) for row in counts),
                       p_observed=p_o, p_expected=p_e, kappa=float(kappa))


def read_annotations(path: str | Path) -> dict[str, str]:
    """CSV of user_id,label rows (optional header) -> mapping."""
    path = Path(path)
    out: dict[str, str] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path} line {line_no}: expected user_id,label")
            uid, label = row[0].strip(), row[1].strip()
            if line_no == 1 and uid == "user_id":
                continue
            if uid in out:
                raise DataError(f"{path} line {line_no}: duplicate user_id {uid!r}")
            out[uid] = label
    if not out:
        raise DataError(f"{path}: no annotation rows")
    return out


def kappa_from_files(path_a: str | Path, path_b: str | Path) -> KappaReport:
    """Join two annotation CSVs on user_id and compute agreement."""
    ann_a = read_annotations(path_a)
    ann_b = read_annotations(path_b)
    common = [uid for uid in ann_a if uid in ann_b]
    if not common:
        raise DataError("annotation files share no user_ids")
    return cohen_kappa([ann_a[u] for u in common], [ann_b[u] for u in common])


def kappa_report_to_dict(report: KappaReport) -> dict:
    return {
        "categories": list(report.categories),
        "counts": [list(row) for row in report.counts],
        "p_observed": report.p_observed,
        "p_expected": report.p_expected,
        "kappa": report.kappa,
    }
