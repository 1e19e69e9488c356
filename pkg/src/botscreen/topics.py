"""Topic modeling over tweets: collapsed Gibbs LDA producing per-user mean
topic weights.

One tweet is one document. The model is fitted on the training split's tweets
only; per-document topic mixtures (theta) are then inferred against the fixed
topic-word table (phi) for every user's most recent tweets.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from numba import njit

from .corpus import Tweet
from .errors import DataError
from .features import URL_RE

MENTION_RE = re.compile(r"@\w+")
_TOKEN_RE = re.compile(r"[a-z0-9]+")

RECENT_TWEET_CAP = 1000


@lru_cache(maxsize=1)
def load_stopwords() -> frozenset[str]:
    text = resources.files("botscreen").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def tokenize(text: str) -> list[str]:
    """Lowercase; strip URLs and @-mentions; split on non-alphanumeric runs;
    drop tokens shorter than 2 characters and stopwords."""
    stripped = MENTION_RE.sub(" ", URL_RE.sub(" ", text))
    stopwords = load_stopwords()
    return [tok for tok in _TOKEN_RE.findall(stripped.lower())
            if len(tok) >= 2 and tok not in stopwords]


def select_recent(tweets: list[Tweet], cap: int = RECENT_TWEET_CAP) -> list[Tweet]:
    """The min(n, cap) most recent tweets by (created_at, tweet_id)."""
    ordered = sorted(tweets, key=lambda t: (t.created_at, t.tweet_id))
    return ordered[-cap:] if cap < len(ordered) else ordered


@dataclass(frozen=True)
class LdaConfig:
    n_topics: int = 5
    alpha: float | None = None  # None -> 50 / n_topics
    beta: float = 0.01
    iterations: int = 1000
    seed: int = 0
    min_doc_freq: int = 2

    def __post_init__(self) -> None:
        if self.n_topics < 2:
            raise DataError(f"n_topics must be >= 2, got {self.n_topics}")
        if self.iterations < 1:
            raise DataError("iterations must be >= 1")
        if self.alpha is not None and self.alpha <= 0:
            raise DataError("alpha must be > 0")
        if self.beta <= 0:
            raise DataError("beta must be > 0")
        if self.min_doc_freq < 1:
            raise DataError("min_doc_freq must be >= 1")

    def resolved_alpha(self) -> float:
        return 50.0 / self.n_topics if self.alpha is None else self.alpha


@dataclass
class TopicModel:
    n_topics: int
    vocabulary: tuple[str, ...]
    phi: np.ndarray  # (K, V), rows sum to 1
    alpha: float
    beta: float
    iterations: int
    seed: int

    def vocab_index(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.vocabulary)}


def build_vocabulary(docs: list[list[str]], min_doc_freq: int = 2) -> tuple[str, ...]:
    """Alphabetical vocabulary of tokens appearing in >= min_doc_freq documents."""
    doc_freq: dict[str, int] = {}
    for doc in docs:
        for tok in set(doc):
            doc_freq[tok] = doc_freq.get(tok, 0) + 1
    return tuple(sorted(w for w, f in doc_freq.items() if f >= min_doc_freq))


def _encode(docs: list[list[str]], index: dict[str, int]) -> tuple[np.ndarray, np.ndarray]:
    """Flatten docs into (token_ids, doc_of) arrays, dropping out-of-vocabulary
    tokens; documents left empty contribute no tokens but keep their slot."""
    token_ids: list[int] = []
    doc_of: list[int] = []
    for d, doc in enumerate(docs):
        for tok in doc:
            w = index.get(tok)
            if w is not None:
                token_ids.append(w)
                doc_of.append(d)
    return (np.asarray(token_ids, dtype=np.int32),
            np.asarray(doc_of, dtype=np.int32))


def _init_state(tokens: np.ndarray, doc_of: np.ndarray, n_docs: int, n_topics: int,
                n_vocab: int, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    """Random initial topic assignment plus the three count tables."""
    z = np.minimum((rng.random(tokens.size) * n_topics).astype(np.int32), n_topics - 1)
    n_dk = np.zeros((n_docs, n_topics), dtype=np.int64)
    n_kw = np.zeros((n_topics, n_vocab), dtype=np.int64)
    n_k = np.zeros(n_topics, dtype=np.int64)
    np.add.at(n_dk, (doc_of, z), 1)
    np.add.at(n_kw, (z, tokens), 1)
    np.add.at(n_k, z, 1)
    return z, n_dk, n_kw, n_k


@njit(cache=True)
def _sweep_kernel(tokens, doc_of, z, n_dk, n_kw, n_k, alpha, beta, u):  # pragma: no cover
    n_topics = n_k.shape[0]
    n_vocab = n_kw.shape[1]
    for i in range(tokens.shape[0]):
        w = tokens[i]
        d = doc_of[i]
        k_old = z[i]
        n_dk[d, k_old] -= 1
        n_kw[k_old, w] -= 1
        n_k[k_old] -= 1
        total = 0.0
        for k in range(n_topics):
            total += (n_dk[d, k] + alpha) * (n_kw[k, w] + beta) / (n_k[k] + n_vocab * beta)
        target = u[i] * total
        acc = 0.0
        k_new = n_topics - 1
        for k in range(n_topics):
            acc += (n_dk[d, k] + alpha) * (n_kw[k, w] + beta) / (n_k[k] + n_vocab * beta)
            if acc > target:
                k_new = k
                break
        z[i] = k_new
        n_dk[d, k_new] += 1
        n_kw[k_new, w] += 1
        n_k[k_new] += 1


def _run_sweep(tokens, doc_of, z, n_dk, n_kw, n_k, alpha, beta,
               rng: np.random.Generator) -> None:
    """One full Gibbs sweep; uniforms are drawn here so the kernel is pure."""
    u = rng.random(tokens.shape[0])
    _sweep_kernel(tokens, doc_of, z, n_dk, n_kw, n_k, alpha, beta, u)


def fit_lda(docs: list[list[str]], config: LdaConfig = LdaConfig()) -> TopicModel:
    """Collapsed Gibbs sampling; phi estimated from the final-state counts."""
    vocabulary = build_vocabulary(docs, config.min_doc_freq)
    if not vocabulary:
        raise DataError("empty corpus: no token reaches the minimum document frequency")
    index = {w: i for i, w in enumerate(vocabulary)}
    tokens, doc_of = _encode(docs, index)
    if tokens.size == 0:
        raise DataError("empty corpus: all documents are empty after vocabulary filtering")
    alpha = config.resolved_alpha()
    rng = np.random.default_rng(config.seed)
    z, n_dk, n_kw, n_k = _init_state(tokens, doc_of, len(docs), config.n_topics,
                                     len(vocabulary), rng)
    for _ in range(config.iterations):
        _run_sweep(tokens, doc_of, z, n_dk, n_kw, n_k, alpha, config.beta, rng)
    phi = (n_kw + config.beta) / (n_k + len(vocabulary) * config.beta)[:, None]
    return TopicModel(n_topics=config.n_topics, vocabulary=vocabulary, phi=phi,
                      alpha=alpha, beta=config.beta, iterations=config.iterations,
                      seed=config.seed)


THETA_ITERATIONS = 100
THETA_TOL = 1e-10


@njit(cache=True)
def _theta_kernel(tokens, offsets, phi, alpha, iterations, tol):  # pragma: no cover
    n_docs = offsets.shape[0] - 1
    n_topics = phi.shape[0]
    theta = np.empty((n_docs, n_topics))
    q = np.empty(n_topics)
    acc = np.empty(n_topics)
    for d in range(n_docs):
        start, end = offsets[d], offsets[d + 1]
        n = end - start
        if n == 0:
            for k in range(n_topics):
                theta[d, k] = 1.0 / n_topics
            continue
        th = np.full(n_topics, 1.0 / n_topics)
        for _ in range(iterations):
            for k in range(n_topics):
                acc[k] = 0.0
            for i in range(start, end):
                w = tokens[i]
                s = 0.0
                for k in range(n_topics):
                    q[k] = th[k] * phi[k, w]
                    s += q[k]
                if s > 0.0:
                    for k in range(n_topics):
                        acc[k] += q[k] / s
                else:
                    for k in range(n_topics):
                        acc[k] += 1.0 / n_topics
            delta = 0.0
            denom = alpha * n_topics + n
            for k in range(n_topics):
                new_k = (alpha + acc[k]) / denom
                diff = new_k - th[k]
                if diff < 0.0:
                    diff = -diff
                if diff > delta:
                    delta = diff
                th[k] = new_k
            if delta < tol:
                break
        theta[d] = th
    return theta


def infer_theta_batch(model: TopicModel, docs: list[list[str]]) -> np.ndarray:
    """Per-document topic mixtures against the fixed phi (fixed-point updates);
    empty documents get the uniform mixture."""
    index = model.vocab_index()
    tokens, doc_of = _encode(docs, index)
    offsets = np.zeros(len(docs) + 1, dtype=np.int64)
    np.add.at(offsets, doc_of + 1, 1)
    offsets = np.cumsum(offsets)
    return _theta_kernel(tokens.astype(np.int32), offsets, model.phi,
                         model.alpha, THETA_ITERATIONS, THETA_TOL)


def infer_theta(model: TopicModel, doc: list[str]) -> np.ndarray:
    return infer_theta_batch(model, [doc])[0]


def user_topic_means(model: TopicModel, tweets: list[Tweet]) -> tuple[float, ...] | None:
    """Mean per-tweet theta over the user's most recent tweets; None if no tweets."""
    recent = select_recent(tweets)
    if not recent:
        return None
    thetas = infer_theta_batch(model, [tokenize(t.text) for t in recent])
    return tuple(float(v) for v in thetas.mean(axis=0))


def save_lda(model: TopicModel, path: str | Path) -> None:
    payload = {
        "n_topics": model.n_topics,
        "alpha": model.alpha,
        "beta": model.beta,
        "iterations": model.iterations,
        "seed": model.seed,
        "vocabulary": list(model.vocabulary),
        "phi": [[float(v) for v in row] for row in model.phi],
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_lda(path: str | Path) -> TopicModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid topic-model JSON ({exc.msg})") from exc
    try:
        phi = np.asarray(payload["phi"], dtype=np.float64)
        model = TopicModel(
            n_topics=int(payload["n_topics"]),
            vocabulary=tuple(payload["vocabulary"]),
            phi=phi,
            alpha=float(payload["alpha"]),
            beta=float(payload["beta"]),
            iterations=int(payload["iterations"]),
            seed=int(payload["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed topic-model payload ({exc})") from exc
    if model.phi.shape != (model.n_topics, len(model.vocabulary)):
        raise DataError(f"{path}: phi shape {model.phi.shape} does not match "
                        f"{model.n_topics} topics x {len(model.vocabulary)} vocabulary")
    return model
