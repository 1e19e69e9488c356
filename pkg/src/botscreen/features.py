"""User-level feature vectors: timeline statistics, profile signals, schema, CSV I/O.

Feature order (full schema, K topic columns):

    botometer_score, tweet_diversity, url_score, daily_mean, daily_std,
    topic_mean_1..topic_mean_K, post_len_mean, post_len_std,
    face_count, name_present

Missing inputs (no tweets, no provider score, no profile image analysis) are
masked, kept as NaN in matrices, and written as empty CSV fields; imputation
happens only inside standardization.
"""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import Cohort, Label, Tweet, UserRecord
from .errors import DataError

URL_RE = re.compile(r"https?://\S+", re.IGNORECASE)
_CAMEL_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z][a-z]*|[a-z]+|\d+")

SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]
    version: str = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise DataError("feature schema names must be unique")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


def full_schema(n_topics: int) -> FeatureSchema:
    if n_topics < 1:
        raise DataError("n_topics must be >= 1")
    names = (
        "botometer_score", "tweet_diversity", "url_score", "daily_mean", "daily_std",
        *(f"topic_mean_{k}" for k in range(1, n_topics + 1)),
        "post_len_mean", "post_len_std", "face_count", "name_present",
    )
    return FeatureSchema(names=names)


def botometer_only_schema() -> FeatureSchema:
    return FeatureSchema(names=("botometer_score",))


@dataclass(frozen=True)
class FeatureVector:
    user_id: str
    values: tuple[float, ...]       # NaN where missing
    missing_mask: tuple[bool, ...]


@dataclass
class FeatureMatrix:
    schema: FeatureSchema
    user_ids: list[str]
    labels: list[Label]
    X: np.ndarray  # float64, NaN = missing

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.schema.index(name)]

    def select(self, names: tuple[str, ...]) -> "FeatureMatrix":
        idx = [self.schema.index(n) for n in names]
        return FeatureMatrix(schema=FeatureSchema(names=tuple(names)),
                             user_ids=list(self.user_ids), labels=list(self.labels),
                             X=self.X[:, idx].copy())

    def take(self, indices) -> "FeatureMatrix":
        idx = list(indices)
        return FeatureMatrix(schema=self.schema,
                             user_ids=[self.user_ids[i] for i in idx],
                             labels=[self.labels[i] for i in idx],
                             X=self.X[idx])


def normalize_text(text: str) -> str:
    """Trim and collapse internal whitespace runs to single spaces (case kept)."""
    return " ".join(text.split())


def tweet_diversity(tweets: list[Tweet]) -> float:
    """|distinct normalized texts| / |tweets|; NaN when the user has no tweets."""
    if not tweets:
        return math.nan
    distinct = {normalize_text(t.text) for t in tweets}
    return len(distinct) / len(tweets)


def url_score(tweets: list[Tweet]) -> float:
    """Fraction of tweets containing at least one URL; NaN when no tweets."""
    if not tweets:
        return math.nan
    hits = sum(1 for t in tweets if URL_RE.search(t.text))
    return hits / len(tweets)


def daily_post_stats(tweets: list[Tweet]) -> tuple[float, float]:
    """Population mean/std of per-UTC-day post counts over the closed active span.

    Days between the first and last tweet with no posts count as zeros.
    Returns (NaN, NaN) when the user has no tweets.
    """
    if not tweets:
        return math.nan, math.nan
    days = [t.created_at.date().toordinal() for t in tweets]
    first, last = min(days), max(days)
    counts = np.zeros(last - first + 1, dtype=np.int64)
    for d in days:
        counts[d - first] += 1
    return float(counts.mean()), float(counts.std())


def post_length_stats(tweets: list[Tweet]) -> tuple[float, float]:
    """Population mean/std of whitespace-token counts per tweet; NaN if no tweets."""
    if not tweets:
        return math.nan, math.nan
    lengths = np.array([len(t.text.split()) for t in tweets], dtype=np.float64)
    return float(lengths.mean()), float(lengths.std())


def load_name_lexicon() -> frozenset[str]:
    """Bundled lowercase given-name list, one name per line."""
    text = resources.files("botscreen").joinpath("data/given_names.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def _name_tokens(value: str) -> list[str]:
    """Split on non-alphanumeric boundaries and camel-case humps."""
    return [m.group(0) for m in _CAMEL_RE.finditer(value)]


def name_present(user: UserRecord, lexicon: frozenset[str]) -> float:
    """1.0 iff any token of display_name (then screen_name) is a known given name."""
    for field_value in (user.display_name, user.screen_name):
        if not field_value:
            continue
        if any(tok.lower() in lexicon for tok in _name_tokens(field_value)):
            return 1.0
    return 0.0


def assemble_features(user: UserRecord, tweets: list[Tweet],
                      topic_means: tuple[float, ...] | None,
                      botometer: float | None,
                      schema: FeatureSchema,
                      lexicon: frozenset[str]) -> FeatureVector:
    """Build one user's vector in schema order; absent inputs become NaN."""
    n_topics = sum(1 for n in schema.names if n.startswith("topic_mean_"))
    if topic_means is not None and len(topic_means) != n_topics:
        raise DataError(f"topic_means length {len(topic_means)} does not match "
                        f"schema's {n_topics} topic columns")
    div = tweet_diversity(tweets)
    url = url_score(tweets)
    d_mean, d_std = daily_post_stats(tweets)
    p_mean, p_std = post_length_stats(tweets)
    by_name: dict[str, float] = {
        "botometer_score": math.nan if botometer is None else float(botometer),
        "tweet_diversity": div,
        "url_score": url,
        "daily_mean": d_mean,
        "daily_std": d_std,
        "post_len_mean": p_mean,
        "post_len_std": p_std,
        "face_count": math.nan if user.face_count is None else float(user.face_count),
        "name_present": name_present(user, lexicon),
    }
    for k in range(n_topics):
        by_name[f"topic_mean_{k + 1}"] = (math.nan if topic_means is None
                                          else float(topic_means[k]))
    try:
        values = tuple(by_name[n] for n in schema.names)
    except KeyError as exc:
        raise DataError(f"schema mismatch: unknown feature {exc.args[0]!r}") from exc
    mask = tuple(math.isnan(v) for v in values)
    return FeatureVector(user_id=user.user_id, values=values, missing_mask=mask)


def build_feature_matrix(cohort: Cohort, schema: FeatureSchema,
                         scores: dict[str, float] | None = None,
                         topic_means: dict[str, tuple[float, ...]] | None = None) -> FeatureMatrix:
    """Assemble all users (cohort order) into one matrix; NaN marks missing."""
    lexicon = load_name_lexicon()
    scores = scores or {}
    topic_means = topic_means or {}
    rows = []
    for user in cohort.users:
        vec = assemble_features(user, cohort.tweets_for(user.user_id),
                                topic_means.get(user.user_id),
                                scores.get(user.user_id), schema, lexicon)
        rows.append(vec.values)
    X = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(schema)))
    return FeatureMatrix(schema=schema, user_ids=[u.user_id for u in cohort.users],
                         labels=cohort.labels(), X=X)


@dataclass(frozen=True)
class StandardizationStats:
    """Training-set imputation medians plus z-score location/scale per feature."""
    schema: FeatureSchema
    median: tuple[float, ...]
    mean: tuple[float, ...]
    std: tuple[float, ...]  # 0.0 marks a constant column (passed through)


def fit_standardization(matrix: FeatureMatrix) -> StandardizationStats:
    if matrix.X.shape[0] == 0:
        raise DataError("cannot fit standardization on an empty matrix")
    medians, means, stds = [], [], []
    for j, name in enumerate(matrix.schema.names):
        col = matrix.X[:, j]
        present = col[~np.isnan(col)]
        if present.size == 0:
            raise DataError(f"feature {name!r} is entirely missing in training data")
        med = float(np.median(present))
        imputed = np.where(np.isnan(col), med, col)
        medians.append(med)
        means.append(float(imputed.mean()))
        stds.append(float(imputed.std()))
    return StandardizationStats(schema=matrix.schema, median=tuple(medians),
                                mean=tuple(means), std=tuple(stds))


def apply_standardization(matrix: FeatureMatrix, stats: StandardizationStats) -> FeatureMatrix:
    if matrix.schema.names != stats.schema.names:
        raise DataError("standardization stats do not match the feature schema")
    X = matrix.X.copy()
    for j in range(X.shape[1]):
        col = X[:, j]
        col = np.where(np.isnan(col), stats.median[j], col)
        if stats.std[j] > 0.0:
            col = (col - stats.mean[j]) / stats.std[j]
        X[:, j] = col
    return FeatureMatrix(schema=matrix.schema, user_ids=list(matrix.user_ids),
                         labels=list(matrix.labels), X=X)


def stats_to_dict(stats: StandardizationStats) -> dict:
    return {"version": stats.schema.version, "names": list(stats.schema.names),
            "median": list(stats.median), "mean": list(stats.mean),
            "std": list(stats.std)}


def stats_from_dict(obj: dict) -> StandardizationStats:
    try:
        schema = FeatureSchema(names=tuple(obj["names"]), version=str(obj["version"]))
        return StandardizationStats(schema=schema,
                                    median=tuple(float(v) for v in obj["median"]),
                                    mean=tuple(float(v) for v in obj["mean"]),
                                    std=tuple(float(v) for v in obj["std"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed standardization stats ({exc})") from exc


def write_features_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    """Write `user_id,label,<schema names>` with missing values as empty fields."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "label", *matrix.schema.names])
        for i, uid in enumerate(matrix.user_ids):
            row = [uid, matrix.labels[i].value]
            for v in matrix.X[i]:
                row.append("" if math.isnan(v) else repr(float(v)))
            writer.writerow(row)


def read_features_csv(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty features file") from None
        if len(header) < 3 or header[0] != "user_id" or header[1] != "label":
            raise DataError(f"{path}: header must start with user_id,label")
        schema = FeatureSchema(names=tuple(header[2:]))
        user_ids: list[str] = []
        labels: list[Label] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path} line {line_no}: expected {len(header)} fields, "
                                f"got {len(row)}")
            user_ids.append(row[0])
            try:
                labels.append(Label(row[1]) if row[1] else Label.UNLABELED)
            except ValueError:
                raise DataError(f"{path} line {line_no}: unknown label {row[1]!r}") from None
            try:
                rows.append([math.nan if f == "" else float(f) for f in row[2:]])
            except ValueError as exc:
                raise DataError(f"{path} line {line_no}: bad numeric field ({exc})") from None
    X = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(schema)))
    return FeatureMatrix(schema=schema, user_ids=user_ids, labels=labels, X=X)


N_HISTOGRAM_BINS = 20


def class_distributions(matrix: FeatureMatrix) -> dict:
    """Per-feature, per-class histograms (20 equal-width bins over the pooled
    min-max) plus mean/median summaries, as a JSON-ready mapping."""
    classes = [Label.NON_BOT, Label.BOT]
    for c in classes:
        if not any(lab is c for lab in matrix.labels):
            raise DataError(f"class {c.value!r} has no users; distributions need both classes")
    label_arr = np.array([lab.value for lab in matrix.labels])
    out: dict = {"bins": N_HISTOGRAM_BINS, "features": {}}
    for j, name in enumerate(matrix.schema.names):
        col = matrix.X[:, j]
        pooled = col[~np.isnan(col)]
        if pooled.size == 0:
            out["features"][name] = {"classes": {}, "note": "entirely missing"}
            continue
        lo, hi = float(pooled.min()), float(pooled.max())
        if hi == lo:  # degenerate span: widen so the histogram is well defined
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, N_HISTOGRAM_BINS + 1)
        entry: dict = {"bin_edges": [float(e) for e in edges], "classes": {}}
        for c in classes:
            vals = col[(label_arr == c.value) & ~np.isnan(col)]
            counts, _ = np.histogram(vals, bins=edges)
            entry["classes"][c.value.replace("-", "_")] = {
                "counts": [int(x) for x in counts],
                "mean": float(vals.mean()) if vals.size else None,
                "median": float(np.median(vals)) if vals.size else None,
                "present": int(vals.size),
            }
        out["features"][name] = entry
    return out


def write_distributions_json(matrix: FeatureMatrix, path: str | Path) -> None:
    Path(path).write_text(json.dumps(class_distributions(matrix), indent=2) + "\n",
                          encoding="utf-8")
