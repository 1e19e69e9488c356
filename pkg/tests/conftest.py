"""Shared fixtures: hand-built cohorts, synthetic cohorts, and a mock HTTP
score provider running on a local thread."""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import pytest

from botscreen.corpus import (ClassProfile, Cohort, Label, SyntheticConfig, Tweet,
                              UserRecord, generate_synthetic)


def utc(y: int, mo: int, d: int, h: int = 0, mi: int = 0, s: int = 0) -> datetime:
    return datetime(y, mo, d, h, mi, s, tzinfo=timezone.utc)


def make_tweets(user_id: str, texts: list[str], start: datetime | None = None) -> list[Tweet]:
    """One tweet per text, one hour apart, ids in chronological order."""
    start = start or utc(2019, 6, 1)
    return [Tweet(tweet_id=f"{user_id}-{i:04d}", user_id=user_id, text=text,
                  created_at=start + timedelta(hours=i))
            for i, text in enumerate(texts)]


@pytest.fixture
def tiny_cohort() -> Cohort:
    users = [
        UserRecord("u1", "emily99", "Emily Smith", face_count=1, label=Label.NON_BOT),
        UserRecord("u2", "daily_deals42", "Daily Deals", face_count=0, label=Label.BOT),
        UserRecord("u3", "quiet_user", None, face_count=None, label=Label.NON_BOT),
    ]
    tweets = {
        "u1": make_tweets("u1", ["hello world", "lunch photos today",
                                 "see https://t.co/abc for more"]),
        "u2": make_tweets("u2", ["buy vitamins https://t.co/x"] * 4),
        "u3": [],
    }
    return Cohort(users=users, tweets=tweets)


SMALL_SYNTH = SyntheticConfig(
    n_bot=30, n_nonbot=170,
    bot=ClassProfile(duplicate_prob=0.6, url_prob=0.7, daily_rate_mean=5.0,
                     daily_rate_dispersion=2.0, topic_bias=(8.0, 1.0, 1.0),
                     face_prob=0.1, name_prob=0.1, words_per_tweet=7.0,
                     score_alpha=2.6, score_beta=2.4),
    nonbot=ClassProfile(duplicate_prob=0.02, url_prob=0.1, daily_rate_mean=1.5,
                        daily_rate_dispersion=1.0, topic_bias=(1.0, 1.0, 1.0),
                        face_prob=0.7, name_prob=0.7, words_per_tweet=8.0,
                        score_alpha=2.0, score_beta=3.0),
    seed=7, span_days=10,
)


@pytest.fixture(scope="session")
def small_synth_cohort() -> Cohort:
    return generate_synthetic(SMALL_SYNTH)


@dataclass
class ScoreServerState:
    """Mutable behavior knobs for the mock provider."""
    scores: dict[str, float] = field(default_factory=dict)
    fail_first: dict[str, int] = field(default_factory=dict)  # uid -> failures left
    raw_body: dict[str, str] = field(default_factory=dict)    # uid -> literal body
    status_for_missing: int = 404
    requests_seen: list[str] = field(default_factory=list)
    auth_headers: list[str | None] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class _ScoreHandler(BaseHTTPRequestHandler):
    state: ScoreServerState  # set per server

    def log_message(self, *args) -> None:  # silence request logging
        pass

    def do_GET(self) -> None:
        parsed = urlparse(self.path)
        uid = parse_qs(parsed.query).get("user_id", [""])[0]
        st = self.state
        with st.lock:
            st.requests_seen.append(uid)
            st.auth_headers.append(self.headers.get("Authorization"))
            fails = st.fail_first.get(uid, 0)
            if fails > 0:
                st.fail_first[uid] = fails - 1
                self.send_response(503)
                self.end_headers()
                return
            if parsed.path != "/score":
                self.send_response(404)
                self.end_headers()
                return
            if uid in st.raw_body:
                body = st.raw_body[uid].encode()
            elif uid in st.scores:
                body = json.dumps({"user_id": uid, "score": st.scores[uid]}).encode()
            else:
                self.send_response(st.status_for_missing)
                self.end_headers()
                return
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


@pytest.fixture
def score_server():
    """Start a provider on an ephemeral port; yields (endpoint, state)."""
    state = ScoreServerState()
    handler = type("Handler", (_ScoreHandler,), {"state": state})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}", state
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
