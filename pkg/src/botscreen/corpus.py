"""Cohort data model, archive ingestion, stratified splitting, and synthetic data.

The on-disk formats are line-oriented JSON (one object per line):

    users.jsonl   {"user_id", "screen_name", "display_name", "face_count", "label"}
    tweets.jsonl  {"tweet_id", "user_id", "text", "created_at"}

Timestamps are UTC with second resolution ("YYYY-MM-DDThh:mm:ssZ").
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError

TIMESTAMP_FMT = "%Y-%m-%dT%H:%M:%SZ"


class Label(str, Enum):
    BOT = "bot"
    NON_BOT = "non-bot"
    UNAVAILABLE = "unavailable"
    UNLABELED = "unlabeled"


# JSON wire values; "unlabeled" is encoded as null on disk.
_WIRE_LABELS = {"bot": Label.BOT, "non-bot": Label.NON_BOT, "unavailable": Label.UNAVAILABLE}


@dataclass(frozen=True)
class Tweet:
    tweet_id: str
    user_id: str
    text: str
    created_at: datetime  # tz-aware UTC


@dataclass
class UserRecord:
    user_id: str
    screen_name: str
    display_name: str | None = None
    face_count: int | None = None
    label: Label = Label.UNLABELED


@dataclass
class Cohort:
    """Users plus per-user tweet timelines sorted by (created_at, tweet_id)."""

    users: list[UserRecord] = field(default_factory=list)
    tweets: dict[str, list[Tweet]] = field(default_factory=dict)

    def tweets_for(self, user_id: str) -> list[Tweet]:
        return self.tweets.get(user_id, [])

    def labels(self) -> list[Label]:
        return [u.label for u in self.users]

    def filter_labeled(self) -> "Cohort":
        """Keep only users labeled bot or non-bot (drops unavailable/unlabeled)."""
        keep = [u for u in self.users if u.label in (Label.BOT, Label.NON_BOT)]
        return Cohort(users=keep, tweets={u.user_id: self.tweets_for(u.user_id) for u in keep})


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train_fraction must be in (0,1), got {self.train_fraction}")


def parse_timestamp(value: str) -> datetime:
    """Parse "YYYY-MM-DDThh:mm:ssZ" into a tz-aware UTC datetime."""
    try:
        return datetime.strptime(value, TIMESTAMP_FMT).replace(tzinfo=timezone.utc)
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad timestamp {value!r}: expected YYYY-MM-DDThh:mm:ssZ") from exc


def format_timestamp(value: datetime) -> str:
    return value.astimezone(timezone.utc).strftime(TIMESTAMP_FMT)


def _parse_user_line(obj: dict, line_no: int) -> UserRecord:
    if not isinstance(obj, dict):
        raise DataError(f"users line {line_no}: expected a JSON object")
    user_id = obj.get("user_id")
    screen_name = obj.get("screen_name")
    if not isinstance(user_id, str) or not user_id:
        raise DataError(f"users line {line_no}: user_id must be a non-empty string")
    if not isinstance(screen_name, str):
        raise DataError(f"users line {line_no}: screen_name must be a string")
    display_name = obj.get("display_name")
    if display_name is not None and not isinstance(display_name, str):
        raise DataError(f"users line {line_no}: display_name must be a string or null")
    face_count = obj.get("face_count")
    if face_count is not None:
        if not isinstance(face_count, int) or isinstance(face_count, bool) or face_count < 0:
            raise DataError(f"users line {line_no}: face_count must be a non-negative integer or null")
    raw_label = obj.get("label")
    if raw_label is None:
        label = Label.UNLABELED
    elif raw_label in _WIRE_LABELS:
        label = _WIRE_LABELS[raw_label]
    else:
        raise DataError(f"users line {line_no}: unknown label {raw_label!r}")
    return UserRecord(user_id=user_id, screen_name=screen_name, display_name=display_name,
                      face_count=face_count, label=label)


def load_users(path: str | Path) -> Cohort:
    """Read users.jsonl into a Cohort (no tweets attached yet)."""
    path = Path(path)
    users: list[UserRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"users line {line_no}: invalid JSON ({exc.msg})") from exc
            user = _parse_user_line(obj, line_no)
            if user.user_id in seen:
                raise DataError(f"duplicate user_id {user.user_id!r} (users line {line_no})")
            seen.add(user.user_id)
            users.append(user)
    return Cohort(users=users, tweets={u.user_id: [] for u in users})


@dataclass(frozen=True)
class TweetIngestReport:
    attached: int
    orphans: int


def load_tweets(path: str | Path, cohort: Cohort) -> tuple[Cohort, TweetIngestReport]:
    """Attach tweets.jsonl to their owning users.

    Tweets whose user_id is not in the cohort are counted as orphans and
    dropped; per-user lists come back sorted by (created_at, tweet_id).
    """
    path = Path(path)
    known = {u.user_id for u in cohort.users}
    buckets: dict[str, list[Tweet]] = {u.user_id: list(cohort.tweets_for(u.user_id)) for u in cohort.users}
    seen_ids = {t.tweet_id for ts in buckets.values() for t in ts}
    attached = orphans = 0
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"tweets line {line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataError(f"tweets line {line_no}: expected a JSON object")
            tweet_id = obj.get("tweet_id")
            user_id = obj.get("user_id")
            text = obj.get("text")
            if not isinstance(tweet_id, str) or not tweet_id:
                raise DataError(f"tweets line {line_no}: tweet_id must be a non-empty string")
            if not isinstance(user_id, str):
                raise DataError(f"tweets line {line_no}: user_id must be a string")
            if not isinstance(text, str):
                raise DataError(f"tweets line {line_no}: text must be a string")
            try:
                created_at = parse_timestamp(obj.get("created_at"))
            except DataError as exc:
                raise DataError(f"tweets line {line_no}: {exc}") from None
            if user_id not in known:
                orphans += 1
                continue
            if tweet_id in seen_ids:
                raise DataError(f"duplicate tweet_id {tweet_id!r} (tweets line {line_no})")
            seen_ids.add(tweet_id)
            buckets[user_id].append(Tweet(tweet_id, user_id, text, created_at))
            attached += 1
    for ts in buckets.values():
        ts.sort(key=lambda t: (t.created_at, t.tweet_id))
    return Cohort(users=list(cohort.users), tweets=buckets), TweetIngestReport(attached, orphans)


def serialize_users(cohort: Cohort) -> str:
    """Canonical users.jsonl text (fixed key order, LF line endings)."""
    lines = []
    for u in cohort.users:
        lines.append(json.dumps({
            "user_id": u.user_id,
            "screen_name": u.screen_name,
            "display_name": u.display_name,
            "face_count": u.face_count,
            "label": None if u.label is Label.UNLABELED else u.label.value,
        }, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_tweets(cohort: Cohort) -> str:
    """Canonical tweets.jsonl text in cohort-user order, timelines sorted."""
    lines = []
    for u in cohort.users:
        for t in cohort.tweets_for(u.user_id):
            lines.append(json.dumps({
                "tweet_id": t.tweet_id,
                "user_id": t.user_id,
                "text": t.text,
                "created_at": format_timestamp(t.created_at),
            }, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_partition(labels: list[Label], fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Split positions into (train, test) preserving per-class proportions.

    The train side gets round-half-up(fraction * total) members overall:
    each class contributes floor(fraction * class_count), and leftover seats
    go to classes by largest fractional remainder (ties to the larger class).
    Selection within a class is a seeded uniform shuffle; returned index
    lists keep the original ordering.
    """
    for i, lab in enumerate(labels):
        if lab not in (Label.BOT, Label.NON_BOT):
            raise DataError(f"stratified split requires bot/non-bot labels only; "
                            f"position {i} is {lab.value!r} (filter first)")
    by_class: dict[Label, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)

    total_target = _round_half_up(fraction * len(labels))
    quota = {c: fraction * len(idx) for c, idx in by_class.items()}
    take = {c: math.floor(q) for c, q in quota.items()}
    leftover = total_target - sum(take.values())
    for c in sorted(by_class, key=lambda c: (-(quota[c] - take[c]), -len(by_class[c]), c.value)):
        if leftover <= 0:
            break
        if take[c] < len(by_class[c]):
            take[c] += 1
            leftover -= 1
    if leftover != 0:
        raise DataError("stratified split could not allocate train seats")

    rng = np.random.default_rng(seed)
    train: set[int] = set()
    for c in sorted(by_class, key=lambda c: c.value):
        members = np.array(by_class[c], dtype=np.int64)
        rng.shuffle(members)
        train.update(int(i) for i in members[: take[c]])
    train_idx = [i for i in range(len(labels)) if i in train]
    test_idx = [i for i in range(len(labels)) if i not in train]
    return train_idx, test_idx


def stratified_split(cohort: Cohort, spec: SplitSpec) -> tuple[Cohort, Cohort]:
    """Partition a fully-labeled cohort into train/test cohorts."""
    train_idx, test_idx = stratified_partition(cohort.labels(), spec.train_fraction, spec.seed)

    def subset(indices: list[int]) -> Cohort:
        users = [cohort.users[i] for i in indices]
        return Cohort(users=users, tweets={u.user_id: cohort.tweets_for(u.user_id) for u in users})

    return subset(train_idx), subset(test_idx)


# --------------------------------------------------------------------------
# Synthetic cohort generation
# --------------------------------------------------------------------------

# Display-name first names drawn by the generator; every entry must resolve
# against the bundled given-name lexicon (tested).
_GIVEN_NAME_POOL = (
    "Emily", "John", "Sarah", "Michael", "Anna", "David", "Laura", "James",
    "Maria", "Robert", "Linda", "Daniel", "Karen", "Thomas", "Nancy", "Paul",
    "Lisa", "Mark", "Susan", "Kevin", "Julia", "Brian", "Amy", "Eric",
    "Rachel", "Peter", "Diana", "Alex", "Grace", "Samuel", "Hannah", "Luis",
    "Sofia", "Omar", "Priya", "Wei", "Elena", "Carlos", "Nina", "Ahmed",
)
_SURNAME_POOL = (
    "Smith", "Johnson", "Brown", "Garcia", "Miller", "Davis", "Wilson",
    "Martinez", "Anderson", "Taylor", "Moore", "Jackson", "Lee", "Perez",
    "Thompson", "White", "Harris", "Clark", "Lewis", "Walker",
)
# Words used for display names that must NOT look like a person (tested to
# be disjoint from the lexicon).
_NON_NAME_WORDS = (
    "Daily", "Deals", "Health", "Store", "Promo", "Global", "Media", "Shop",
    "Online", "Official", "Network", "Update", "Alerts", "Wellness", "Baby",
    "Care", "Outlet", "Supplies", "Vitamins", "Pharmacy", "Coupons", "Best",
)
_COMMON_WORDS = tuple(f"common{i:02d}" for i in range(60))


def _topic_vocab(topic: int, size: int = 40) -> tuple[str, ...]:
    return tuple(f"topic{topic}word{i:02d}" for i in range(size))


@dataclass(frozen=True)
class ClassProfile:
    """Behavior parameters for one planted class."""

    duplicate_prob: float = 0.05
    url_prob: float = 0.15
    daily_rate_mean: float = 2.0
    daily_rate_dispersion: float = 1.0
    topic_bias: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)
    face_prob: float = 0.2
    name_prob: float = 0.5
    words_per_tweet: float = 8.0
    score_alpha: float = 2.0
    score_beta: float = 3.0

    def __post_init__(self) -> None:
        for name in ("duplicate_prob", "url_prob", "face_prob", "name_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} must be in [0,1], got {v}")
        for name in ("daily_rate_mean", "daily_rate_dispersion", "words_per_tweet",
                     "score_alpha", "score_beta"):
            v = getattr(self, name)
            if v <= 0:
                raise DataError(f"{name} must be > 0, got {v}")
        if not self.topic_bias or any(b <= 0 for b in self.topic_bias):
            raise DataError("topic_bias must be a non-empty tuple of positive weights")


@dataclass(frozen=True)
class SyntheticConfig:
    n_bot: int
    n_nonbot: int
    bot: ClassProfile = ClassProfile()
    nonbot: ClassProfile = ClassProfile()
    seed: int = 0
    span_days: int = 30
    start_day: str = "2019-06-01"

    def __post_init__(self) -> None:
        if self.n_bot < 0 or self.n_nonbot < 0:
            raise DataError("class sizes must be non-negative")
        if self.n_bot + self.n_nonbot == 0:
            raise DataError("empty cohort: n_bot + n_nonbot must be > 0")
        if self.span_days < 1:
            raise DataError("span_days must be >= 1")
        if len(self.bot.topic_bias) != len(self.nonbot.topic_bias):
            raise DataError("both class profiles must use the same number of planted topics")

    @classmethod
    def from_mapping(cls, data: dict) -> "SyntheticConfig":
        """Build a config from a parsed TOML mapping with [bot]/[nonbot] tables."""
        def profile(table: dict) -> ClassProfile:
            kwargs = dict(table)
            if "topic_bias" in kwargs:
                kwargs["topic_bias"] = tuple(float(x) for x in kwargs["topic_bias"])
            return ClassProfile(**kwargs)

        try:
            return cls(
                n_bot=int(data["n_bot"]),
                n_nonbot=int(data["n_nonbot"]),
                bot=profile(data.get("bot", {})),
                nonbot=profile(data.get("nonbot", {})),
                seed=int(data.get("seed", 0)),
                span_days=int(data.get("span_days", 30)),
                start_day=str(data.get("start_day", "2019-06-01")),
            )
        except KeyError as exc:
            raise DataError(f"synthetic config missing key: {exc.args[0]}") from exc
        except TypeError as exc:
            raise DataError(f"bad synthetic config: {exc}") from exc


def _synth_user(i: int, label: Label, profile: ClassProfile, start: datetime,
                span_days: int, n_topics: int, rng: np.random.Generator) -> tuple[UserRecord, list[Tweet]]:
    uid = f"u{i:05d}"
    if rng.random() < profile.name_prob:
        first = _GIVEN_NAME_POOL[rng.integers(0, len(_GIVEN_NAME_POOL))]
        last = _SURNAME_POOL[rng.integers(0, len(_SURNAME_POOL))]
        display = f"{first} {last}"
        screen = f"{first.lower()}{rng.integers(10, 9999)}"
    else:
        a = _NON_NAME_WORDS[rng.integers(0, len(_NON_NAME_WORDS))]
        b = _NON_NAME_WORDS[rng.integers(0, len(_NON_NAME_WORDS))]
        display = f"{a} {b}"
        screen = f"{a.lower()}_{b.lower()}{rng.integers(10, 9999)}"
    face = int(rng.integers(1, 3)) if rng.random() < profile.face_prob else 0
    user = UserRecord(user_id=uid, screen_name=screen, display_name=display,
                      face_count=face, label=label)

    bias = np.asarray(profile.topic_bias, dtype=float)
    mixture = rng.dirichlet(bias)
    # Per-user posting rate ~ Gamma with mean daily_rate_mean and standard
    # deviation daily_rate_dispersion; per-day counts ~ Poisson(rate).
    m, s = profile.daily_rate_mean, profile.daily_rate_dispersion
    lam = rng.gamma(shape=(m * m) / (s * s), scale=(s * s) / m)
    counts = rng.poisson(lam, size=span_days)

    stamps: list[datetime] = []
    for day, c in enumerate(counts):
        for _ in range(int(c)):
            sec = int(rng.integers(0, 86400))
            stamps.append(start + timedelta(days=day, seconds=sec))
    stamps.sort()

    vocabs = [_topic_vocab(t) for t in range(n_topics)]
    texts: list[str] = []
    for j in range(len(stamps)):
        if j > 0 and rng.random() < profile.duplicate_prob:
            texts.append(texts[int(rng.integers(0, j))])
            continue
        z = int(rng.choice(n_topics, p=mixture))
        n_words = 1 + int(rng.poisson(max(profile.words_per_tweet - 1.0, 0.1)))
        words = []
        for _ in range(n_words):
            if rng.random() < 0.2:
                words.append(_COMMON_WORDS[rng.integers(0, len(_COMMON_WORDS))])
            else:
                words.append(vocabs[z][rng.integers(0, len(vocabs[z]))])
        text = " ".join(words)
        if rng.random() < profile.url_prob:
            suffix = "".join("abcdefghij"[d] for d in rng.integers(0, 10, size=8))
            text = f"{text} https://t.co/{suffix}"
        texts.append(text)

    tweets = [Tweet(tweet_id=f"{uid}-{j:05d}", user_id=uid, text=texts[j], created_at=stamps[j])
              for j in range(len(stamps))]
    return user, tweets


def generate_synthetic(config: SyntheticConfig) -> Cohort:
    """Generate a planted-label cohort; byte-identical for a fixed seed.

    Bots are generated first (u00000..), then non-bots. The class profiles
    control duplicate/URL/posting-rate/topic-concentration/name/face behavior
    so the class-conditional feature distributions separate by construction.
    """
    rng = np.random.default_rng(config.seed)
    start = datetime.strptime(config.start_day, "%Y-%m-%d").replace(tzinfo=timezone.utc)
    n_topics = len(config.bot.topic_bias)
    users: list[UserRecord] = []
    tweets: dict[str, list[Tweet]] = {}
    plan = [(Label.BOT, config.bot)] * config.n_bot + [(Label.NON_BOT, config.nonbot)] * config.n_nonbot
    for i, (label, profile) in enumerate(plan):
        user, user_tweets = _synth_user(i, label, profile, start, config.span_days, n_topics, rng)
        users.append(user)
        tweets[user.user_id] = user_tweets
    return Cohort(users=users, tweets=tweets)


def generate_synthetic_scores(cohort: Cohort, config: SyntheticConfig) -> dict[str, float]:
    """Per-user synthetic provider scores drawn from each class's Beta params."""
    rng = np.random.default_rng([config.seed, 17])
    scores: dict[str, float] = {}
    for u in cohort.users:
        profile = config.bot if u.label is Label.BOT else config.nonbot
        scores[u.user_id] = float(rng.beta(profile.score_alpha, profile.score_beta))
    return scores
