"""HTTP client for a bot-likelihood score provider, with a JSONL cache,
threshold classification, and cross-validated threshold calibration.

Wire contract: GET {endpoint}/score?user_id=<id> with an optional
`Authorization: Bearer <token>` header (token from BOTSCREEN_API_TOKEN),
returning 200 with JSON {"user_id": str, "score": float in [0,1]}.
"""
from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import numpy as np
import requests

from .corpus import Label, format_timestamp
from .errors import DataError, ProviderError
from .evaluation import confusion, metrics, stratified_folds

TOKEN_ENV_VAR = "BOTSCREEN_API_TOKEN"


class ScoreSource(str, Enum):
    LIVE = "live"
    CACHE = "cache"
    FILE = "file"


@dataclass(frozen=True)
class BotometerScore:
    user_id: str
    score: float
    retrieved_at: str  # "YYYY-MM-DDThh:mm:ssZ"
    source: ScoreSource

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise DataError(f"score for {self.user_id!r} outside [0,1]: {self.score}")


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str
    cache_path: Path | None = None
    timeout: float = 10.0
    max_retries: int = 3
    backoff_base_ms: float = 250.0
    max_concurrency: int = 4

    def __post_init__(self) -> None:
        if not self.endpoint:
            raise ProviderError("provider endpoint must be a non-empty URL")
        if self.timeout <= 0:
            raise ProviderError(f"timeout must be > 0, got {self.timeout}")
        if self.max_retries < 0:
            raise ProviderError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.backoff_base_ms < 0:
            raise ProviderError(f"backoff_base_ms must be >= 0, got {self.backoff_base_ms}")
        if self.max_concurrency < 1:
            raise ProviderError(f"max_concurrency must be >= 1, got {self.max_concurrency}")


@dataclass
class FetchResult:
    """Successes in first-occurrence input order; per-user failure reasons."""
    scores: list[BotometerScore] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)

    def as_mapping(self) -> dict[str, float]:
        return {s.user_id: s.score for s in self.scores}


def read_scores_file(path: str | Path) -> dict[str, BotometerScore]:
    """Load a scores.jsonl file; for repeated user_ids the last line wins."""
    path = Path(path)
    out: dict[str, BotometerScore] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"scores line {line_no}: invalid JSON ({exc.msg})") from exc
            try:
                uid = obj["user_id"]
                score = float(obj["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"scores line {line_no}: need user_id and numeric score") from exc
            if not isinstance(uid, str) or not uid:
                raise DataError(f"scores line {line_no}: user_id must be a non-empty string")
            if not 0.0 <= score <= 1.0:
                raise DataError(f"scores line {line_no}: score {score} outside [0,1]")
            retrieved = obj.get("retrieved_at", "")
            out[uid] = BotometerScore(uid, score, str(retrieved), ScoreSource.FILE)
    return out


def append_score(path: Path, record: BotometerScore) -> None:
    line = json.dumps({"user_id": record.user_id, "score": record.score,
                       "retrieved_at": record.retrieved_at})
    with path.open("a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def _fetch_one(config: ProviderConfig, user_id: str, token: str | None) -> BotometerScore:
    """Fetch one user's score with up to max_retries + 1 attempts and
    exponential backoff. Protocol violations fail immediately (no retry)."""
    url = config.endpoint.rstrip("/") + "/score"
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    last_error = "no attempt made"
    for attempt in range(config.max_retries + 1):
        if attempt > 0:
            time.sleep(config.backoff_base_ms * (2 ** (attempt - 1)) / 1000.0)
        try:
            resp = requests.get(url, params={"user_id": user_id}, headers=headers,
                                timeout=config.timeout)
        except requests.RequestException as exc:
            last_error = f"request failed: {exc.__class__.__name__}"
            continue
        if resp.status_code != 200:
            last_error = f"status {resp.status_code}"
            continue
        try:
            payload = resp.json()
        except ValueError:
            raise ProviderError("invalid-response: body is not JSON") from None
        if not isinstance(payload, dict) or payload.get("user_id") != user_id:
            raise ProviderError("invalid-response: user_id mismatch or non-object body")
        score = payload.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool) \
                or not 0.0 <= float(score) <= 1.0:
            raise ProviderError(f"invalid-response: score {score!r} outside [0,1]")
        now = format_timestamp(datetime.now(timezone.utc))
        return BotometerScore(user_id, float(score), now, ScoreSource.LIVE)
    raise ProviderError(last_error)


def fetch_scores(config: ProviderConfig, user_ids: list[str]) -> FetchResult:
    """Resolve scores for user_ids: cache first, then concurrent live fetches.

    Cached ids never touch the network. Live successes are appended to the
    cache file (single-writer lock). Users whose fetches ultimately fail are
    reported in `failures` and simply absent from `scores` — callers mask them.
    """
    unique_ids = list(dict.fromkeys(user_ids))
    cached: dict[str, BotometerScore] = {}
    if config.cache_path is not None and Path(config.cache_path).exists():
        cached = read_scores_file(config.cache_path)

    result = FetchResult()
    resolved: dict[str, BotometerScore] = {}
    misses: list[str] = []
    for uid in unique_ids:
        if uid in cached:
            hit = cached[uid]
            resolved[uid] = BotometerScore(hit.user_id, hit.score, hit.retrieved_at,
                                           ScoreSource.CACHE)
        else:
            misses.append(uid)

    token = os.environ.get(TOKEN_ENV_VAR)
    if misses:
        write_lock = threading.Lock()

        def job(uid: str) -> tuple[str, BotometerScore | None, str | None]:
            try:
                record = _fetch_one(config, uid, token)
            except ProviderError as exc:
                return uid, None, str(exc)
            if config.cache_path is not None:
                with write_lock:
                    append_score(Path(config.cache_path), record)
            return uid, record, None

        workers = min(config.max_concurrency, len(misses))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for uid, record, error in pool.map(job, misses):
                if record is not None:
                    resolved[uid] = record
                else:
                    result.failures[uid] = error or "unknown error"

    result.scores = [resolved[uid] for uid in unique_ids if uid in resolved]
    return result


@dataclass(frozen=True)
class Threshold:
    tau: float = 0.47

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise DataError(f"tau must be in [0,1], got {self.tau}")


def threshold_classify(score: float, threshold: Threshold) -> Label:
    """bot iff score >= tau (boundary inclusive)."""
    if not 0.0 <= score <= 1.0:
        raise DataError(f"score outside [0,1]: {score}")
    return Label.BOT if score >= threshold.tau else Label.NON_BOT


DEFAULT_TAU_GRID = tuple(i / 100 for i in range(101))


@dataclass(frozen=True)
class CalibrationCandidate:
    tau: float
    fold_f1: tuple[float, ...]
    mean_f1: float


@dataclass(frozen=True)
class CalibrationReport:
    candidates: tuple[CalibrationCandidate, ...]
    selected: Threshold
    folds: int
    seed: int


def calibrate_threshold(scores: np.ndarray, labels: list[Label], folds: int = 5,
                        grid: tuple[float, ...] = DEFAULT_TAU_GRID,
                        seed: int = 0) -> CalibrationReport:
    """Pick the grid tau maximizing mean bot-class F1 over stratified folds.

    Ties break toward the smaller tau. Scores are fixed inputs (nothing is
    fitted), so folds only determine the evaluation subsets.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size != len(labels):
        raise DataError("scores and labels must be aligned 1-D sequences")
    if np.isnan(scores).any():
        raise DataError("calibration requires a score for every user (mask first)")
    if not grid:
        raise DataError("calibration grid is empty")
    assignment = stratified_folds(labels, folds, seed)
    candidates: list[CalibrationCandidate] = []
    best: CalibrationCandidate | None = None
    for tau in grid:
        threshold = Threshold(float(tau))
        fold_scores: list[float] = []
        for fold in range(folds):
            mask = assignment == fold
            preds = [threshold_classify(float(s), threshold) for s in scores[mask]]
            truth = [labels[i] for i in np.flatnonzero(mask)]
            fold_scores.append(metrics(confusion(truth, preds)).bot.f1)
        cand = CalibrationCandidate(tau=float(tau), fold_f1=tuple(fold_scores),
                                    mean_f1=float(np.mean(fold_scores)))
        candidates.append(cand)
        if best is None or cand.mean_f1 > best.mean_f1:
            best = cand
    assert best is not None
    return CalibrationReport(candidates=tuple(candidates),
                             selected=Threshold(best.tau), folds=folds, seed=seed)
