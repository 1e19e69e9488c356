"""Command-line pipeline: synthesize data, fit topics, fetch provider scores,
featurize, train, and evaluate the three screening systems.

Systems:
    botometer-threshold  classify by provider score >= tau
    gbm-botometer        boosted classifier over the provider score alone
    gbm-full             boosted classifier over the full feature set

Configuration comes from a TOML file (--config); command-line flags override
file values. All randomness flows from named seeds; --seed forces every
module seed at once. Exit codes: 0 success, 2 usage, 3 data/schema error,
4 provider error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from enum import Enum
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .botometer import (DEFAULT_TAU_GRID, ProviderConfig, Threshold,
                        calibrate_threshold, fetch_scores, read_scores_file,
                        threshold_classify)
from .corpus import (ClassProfile, Cohort, SplitSpec, SyntheticConfig,
                     generate_synthetic, generate_synthetic_scores, load_tweets,
                     load_users, serialize_tweets, serialize_users,
                     stratified_partition)
from .errors import BotscreenError, DataError, ProviderError
from .evaluation import (confusion, cross_validate, kappa_from_files,
                         kappa_report_to_dict, labels_to_signs, metrics,
                         write_cv_report_json, write_metrics_json)
from .features import (FeatureMatrix, apply_standardization, botometer_only_schema,
                       build_feature_matrix, fit_standardization, full_schema,
                       read_features_csv, stats_from_dict, stats_to_dict,
                       write_distributions_json, write_features_csv)
from .gbm import GbmConfig, fit_gbm, load_gbm, predict_label, save_gbm
from .sampling import SmoteConfig, smote_rebalance
from .topics import (LdaConfig, fit_lda, load_lda, save_lda, select_recent,
                     tokenize, user_topic_means)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_PROVIDER = 4


class System(str, Enum):
    BOTOMETER_THRESHOLD = "botometer-threshold"
    GBM_BOTOMETER = "gbm-botometer"
    GBM_FULL = "gbm-full"


# Default synthetic class profiles: provider scores overlap between classes
# (weakly informative) while timeline/profile behavior separates strongly.
DEFAULT_BOT_PROFILE = ClassProfile(
    duplicate_prob=0.55, url_prob=0.65,
    daily_rate_mean=6.0, daily_rate_dispersion=4.0,
    topic_bias=(8.0, 1.0, 1.0, 1.0, 1.0),
    face_prob=0.15, name_prob=0.10, words_per_tweet=8.0,
    score_alpha=2.6, score_beta=2.4,
)
DEFAULT_NONBOT_PROFILE = ClassProfile(
    duplicate_prob=0.02, url_prob=0.12,
    daily_rate_mean=1.8, daily_rate_dispersion=1.2,
    topic_bias=(1.0, 1.0, 1.0, 1.0, 1.0),
    face_prob=0.65, name_prob=0.70, words_per_tweet=9.0,
    score_alpha=2.0, score_beta=3.0,
)


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    try:
        with p.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"invalid TOML in {p}: {exc}") from exc


def _section(cfg: dict, name: str) -> dict:
    value = cfg.get(name, {})
    if not isinstance(value, dict):
        raise DataError(f"config section [{name}] must be a table")
    return value


def _master_seed(args: argparse.Namespace, cfg: dict) -> tuple[int, bool]:
    """(seed, forced): forced=True when --seed was given, overriding all
    section seeds."""
    if getattr(args, "seed", None) is not None:
        return int(args.seed), True
    return int(cfg.get("seed", 0)), False


def _section_seed(section: dict, master: int, forced: bool) -> int:
    if forced:
        return master
    return int(section.get("seed", master))


def _resolve_system(args: argparse.Namespace, cfg: dict) -> System:
    raw = getattr(args, "system", None) or cfg.get("system", System.GBM_FULL.value)
    try:
        return System(raw)
    except ValueError:
        raise DataError(f"unknown system {raw!r}; choose one of "
                        f"{', '.join(s.value for s in System)}") from None


def _resolve_tau(args: argparse.Namespace, cfg: dict) -> Threshold:
    if getattr(args, "tau", None) is not None:
        return Threshold(float(args.tau))
    return Threshold(float(_section(cfg, "threshold").get("tau", 0.47)))


def _path_from(args: argparse.Namespace, cfg: dict, flag: str, key: str,
               default: str | None = None, must_exist: bool = False) -> Path:
    raw = getattr(args, flag, None) or _section(cfg, "paths").get(key) or default
    if raw is None:
        raise DataError(f"no path configured for {key} (set [paths].{key} or --{flag.replace('_', '-')})")
    p = Path(raw)
    if must_exist and not p.exists():
        raise DataError(f"{key} file not found: {p}")
    return p


def _out_dir(args: argparse.Namespace, cfg: dict) -> Path:
    raw = getattr(args, "out", None) or _section(cfg, "paths").get("out_dir", ".")
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _split_spec(cfg: dict, master: int, forced: bool) -> SplitSpec:
    sec = _section(cfg, "split")
    return SplitSpec(train_fraction=float(sec.get("train_fraction", 0.8)),
                     seed=_section_seed(sec, master, forced))


def _smote_config(cfg: dict, master: int, forced: bool) -> SmoteConfig | None:
    sec = _section(cfg, "smote")
    if not sec.get("enabled", True):
        return None
    return SmoteConfig(k_neighbors=int(sec.get("k_neighbors", 5)),
                       target_ratio=float(sec.get("target_ratio", 1.0)),
                       seed=_section_seed(sec, master, forced))


def _gbm_config(cfg: dict, master: int, forced: bool) -> GbmConfig:
    sec = _section(cfg, "gbm")
    return GbmConfig(n_estimators=int(sec.get("n_estimators", 200)),
                     learning_rate=float(sec.get("learning_rate", 0.1)),
                     max_depth=int(sec.get("max_depth", 3)),
                     min_samples_leaf=int(sec.get("min_samples_leaf", 1)),
                     seed=_section_seed(sec, master, forced))


def _lda_config(cfg: dict, master: int, forced: bool) -> LdaConfig:
    sec = _section(cfg, "lda")
    alpha = sec.get("alpha")
    return LdaConfig(n_topics=int(sec.get("n_topics", 5)),
                     alpha=float(alpha) if alpha is not None else None,
                     beta=float(sec.get("beta", 0.01)),
                     iterations=int(sec.get("iterations", 1000)),
                     seed=_section_seed(sec, master, forced),
                     min_doc_freq=int(sec.get("min_doc_freq", 2)))


def _cv_settings(cfg: dict, master: int, forced: bool) -> tuple[bool, int, int, list[int], list[int]]:
    sec = _section(cfg, "cv")
    return (bool(sec.get("enabled", False)),
            int(sec.get("folds", 5)),
            _section_seed(sec, master, forced),
            [int(v) for v in sec.get("grid_max_depth", [1, 2, 3, 4])],
            [int(v) for v in sec.get("grid_min_samples_leaf", [1, 5, 20])])


def _provider_config(args: argparse.Namespace, cfg: dict) -> ProviderConfig:
    sec = _section(cfg, "provider")
    endpoint = getattr(args, "endpoint", None) or sec.get("endpoint")
    if not endpoint:
        raise ProviderError("no provider endpoint configured "
                            "(set [provider].endpoint or --endpoint)")
    cache = getattr(args, "scores", None) or _section(cfg, "paths").get("scores")
    return ProviderConfig(endpoint=str(endpoint),
                          cache_path=Path(cache) if cache else None,
                          timeout=float(sec.get("timeout", 10.0)),
                          max_retries=int(sec.get("max_retries", 3)),
                          backoff_base_ms=float(sec.get("backoff_base_ms", 250.0)),
                          max_concurrency=int(sec.get("max_concurrency", 4)))


def _load_labeled_cohort(args: argparse.Namespace, cfg: dict) -> Cohort:
    users_path = _path_from(args, cfg, "users", "users", must_exist=True)
    tweets_path = _path_from(args, cfg, "tweets", "tweets", must_exist=True)
    cohort = load_users(users_path)
    cohort, report = load_tweets(tweets_path, cohort)
    if report.orphans:
        print(f"note: dropped {report.orphans} tweets from unknown users", file=sys.stderr)
    return cohort.filter_labeled()


def _synthetic_config(args: argparse.Namespace, cfg: dict, master: int, forced: bool) -> SyntheticConfig:
    sec = _section(cfg, "synth")

    def profile(base: ClassProfile, table: dict) -> ClassProfile:
        kwargs = dict(table)
        if "topic_bias" in kwargs:
            kwargs["topic_bias"] = tuple(float(v) for v in kwargs["topic_bias"])
        return replace(base, **kwargs)

    n_bot = args.n_bot if args.n_bot is not None else int(sec.get("n_bot", 250))
    n_nonbot = args.n_nonbot if args.n_nonbot is not None else int(sec.get("n_nonbot", 4750))
    span = args.span_days if args.span_days is not None else int(sec.get("span_days", 14))
    return SyntheticConfig(n_bot=n_bot, n_nonbot=n_nonbot,
                           bot=profile(DEFAULT_BOT_PROFILE, sec.get("bot", {})),
                           nonbot=profile(DEFAULT_NONBOT_PROFILE, sec.get("nonbot", {})),
                           seed=_section_seed(sec, master, forced),
                           span_days=span,
                           start_day=str(sec.get("start_day", "2019-06-01")))


def cmd_synth(args: argparse.Namespace, cfg: dict) -> int:
    master, forced = _master_seed(args, cfg)
    config = _synthetic_config(args, cfg, master, forced)
    out = _out_dir(args, cfg)
    cohort = generate_synthetic(config)
    (out / "users.jsonl").write_text(serialize_users(cohort), encoding="utf-8")
    (out / "tweets.jsonl").write_text(serialize_tweets(cohort), encoding="utf-8")
    n_tweets = sum(len(ts) for ts in cohort.tweets.values())
    if args.emit_scores:
        scores = generate_synthetic_scores(cohort, config)
        stamp = f"{config.start_day}T00:00:00Z"
        lines = [json.dumps({"user_id": uid, "score": scores[uid], "retrieved_at": stamp})
                 for uid in (u.user_id for u in cohort.users)]
        (out / "scores.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(cohort.users)} users ({config.n_bot} bot, "
          f"{config.n_nonbot} non-bot), {n_tweets} tweets to {out}")
    return EXIT_OK


def cmd_fit_lda(args: argparse.Namespace, cfg: dict) -> int:
    master, forced = _master_seed(args, cfg)
    cohort = _load_labeled_cohort(args, cfg)
    split = _split_spec(cfg, master, forced)
    lda_cfg = _lda_config(cfg, master, forced)
    train_idx, _ = stratified_partition(cohort.labels(), split.train_fraction, split.seed)
    docs: list[list[str]] = []
    for i in train_idx:
        user = cohort.users[i]
        for tweet in select_recent(cohort.tweets_for(user.user_id)):
            docs.append(tokenize(tweet.text))
    model = fit_lda(docs, lda_cfg)
    out = _out_dir(args, cfg)
    model_path = (Path(args.lda_model) if args.lda_model
                  else Path(_section(cfg, "paths").get("lda_model", out / "lda.json")))
    save_lda(model, model_path)
    print(f"fitted {model.n_topics} topics over {len(model.vocabulary)} vocabulary "
          f"terms from {len(docs)} training tweets -> {model_path}")
    return EXIT_OK


def cmd_fetch_scores(args: argparse.Namespace, cfg: dict) -> int:
    provider = _provider_config(args, cfg)
    cohort = _load_labeled_cohort(args, cfg)
    ids = [u.user_id for u in cohort.users]
    result = fetch_scores(provider, ids)
    by_source = {"live": 0, "cache": 0, "file": 0}
    for record in result.scores:
        by_source[record.source.value] += 1
    print(f"resolved {len(result.scores)}/{len(ids)} scores "
          f"(live {by_source['live']}, cache {by_source['cache']}), "
          f"{len(result.failures)} failures")
    for uid, reason in sorted(result.failures.items()):
        print(f"note: no score for {uid}: {reason}", file=sys.stderr)
    return EXIT_OK


def _topic_means_for(cohort: Cohort, lda_path: Path) -> tuple[dict[str, tuple[float, ...]], int]:
    model = load_lda(lda_path)
    means: dict[str, tuple[float, ...]] = {}
    for user in cohort.users:
        tm = user_topic_means(model, cohort.tweets_for(user.user_id))
        if tm is not None:
            means[user.user_id] = tm
    return means, model.n_topics


def cmd_featurize(args: argparse.Namespace, cfg: dict) -> int:
    system = _resolve_system(args, cfg)
    cohort = _load_labeled_cohort(args, cfg)
    if not cohort.users:
        raise DataError("no labeled users to featurize")
    scores: dict[str, float] = {}
    scores_path = getattr(args, "scores", None) or _section(cfg, "paths").get("scores")
    if scores_path and Path(scores_path).exists():
        scores = {uid: rec.score for uid, rec in read_scores_file(scores_path).items()}
    elif scores_path:
        print(f"note: scores file {scores_path} not found; botometer_score masked",
              file=sys.stderr)
    if system is System.GBM_FULL:
        raw_lda = (args.lda_model or _section(cfg, "paths").get("lda_model")
                   or str(_out_dir(args, cfg) / "lda.json"))
        if not Path(raw_lda).is_file():
            raise DataError("system gbm-full needs a fitted topic model; "
                            "run fit-lda first and point [paths].lda_model at it")
        topic_means, n_topics = _topic_means_for(cohort, Path(raw_lda))
        schema = full_schema(n_topics)
        matrix = build_feature_matrix(cohort, schema, scores, topic_means)
    else:
        matrix = build_feature_matrix(cohort, botometer_only_schema(), scores, None)
    out = _out_dir(args, cfg)
    features_path = (Path(args.features) if args.features
                     else Path(_section(cfg, "paths").get("features", out / "features.csv")))
    write_features_csv(matrix, features_path)
    print(f"wrote {len(matrix.user_ids)} rows x {len(matrix.schema)} features "
          f"({system.value}) -> {features_path}")
    return EXIT_OK


def _train_matrix(args: argparse.Namespace, cfg: dict, master: int,
                  forced: bool) -> tuple[FeatureMatrix, FeatureMatrix]:
    features_path = _path_from(args, cfg, "features", "features", must_exist=True)
    matrix = read_features_csv(features_path)
    split = _split_spec(cfg, master, forced)
    train_idx, test_idx = stratified_partition(matrix.labels, split.train_fraction,
                                               split.seed)
    return matrix.take(train_idx), matrix.take(test_idx)


def _score_column(matrix: FeatureMatrix, purpose: str) -> np.ndarray:
    if "botometer_score" not in matrix.schema.names:
        raise DataError(f"features file lacks a botometer_score column ({purpose})")
    col = matrix.column("botometer_score")
    if np.isnan(col).any():
        missing = int(np.isnan(col).sum())
        raise DataError(f"{missing} users have no provider score; {purpose} "
                        "requires a score for every user (run fetch-scores)")
    return col


def cmd_train(args: argparse.Namespace, cfg: dict) -> int:
    master, forced = _master_seed(args, cfg)
    system = _resolve_system(args, cfg)
    train_m, _ = _train_matrix(args, cfg, master, forced)
    out = _out_dir(args, cfg)
    cv_enabled, folds, cv_seed, grid_depths, grid_leaves = _cv_settings(cfg, master, forced)

    if system is System.BOTOMETER_THRESHOLD:
        scores = _score_column(train_m, "threshold calibration")
        report = calibrate_threshold(scores, train_m.labels, folds=folds,
                                     grid=DEFAULT_TAU_GRID, seed=cv_seed)
        payload = {
            "system": system.value,
            "folds": report.folds,
            "seed": report.seed,
            "selection": "mean bot-class F1",
            "selected_tau": report.selected.tau,
            "candidates": [{"tau": c.tau, "mean_bot_f1": c.mean_f1}
                           for c in report.candidates],
        }
        (out / "cv_report.json").write_text(json.dumps(payload, indent=2) + "\n",
                                            encoding="utf-8")
        print(f"calibrated tau = {report.selected.tau:.2f} "
              f"(mean bot-F1 {max(c.mean_f1 for c in report.candidates):.4f}) "
              f"-> {out / 'cv_report.json'}")
        return EXIT_OK

    smote = _smote_config(cfg, master, forced)
    gbm_cfg = _gbm_config(cfg, master, forced)
    if cv_enabled:
        grid = tuple(replace(gbm_cfg, max_depth=d, min_samples_leaf=m)
                     for d in grid_depths for m in grid_leaves)
        report = cross_validate(train_m, grid, k=folds, seed=cv_seed, smote=smote)
        gbm_cfg = report.selected.config
        write_cv_report_json(report, out / "cv_report.json")
        print(f"cross-validation selected max_depth={gbm_cfg.max_depth}, "
              f"min_samples_leaf={gbm_cfg.min_samples_leaf} "
              f"(mean bot-F1 {report.selected.mean_bot_f1:.4f})")

    stats = fit_standardization(train_m)
    train_std = apply_standardization(train_m, stats)
    X, y = train_std.X, labels_to_signs(train_std.labels)
    if smote is not None:
        rebalanced = smote_rebalance(X, y, smote)
        X, y = rebalanced.X, rebalanced.y
    model = fit_gbm(X, y, gbm_cfg, schema_names=train_m.schema.names,
                    schema_version=train_m.schema.version,
                    standardization=stats_to_dict(stats))
    model_path = (Path(args.gbm_model) if args.gbm_model
                  else Path(_section(cfg, "paths").get("gbm_model", out / "model.json")))
    save_gbm(model, model_path)
    print(f"trained {len(model.trees)} trees on {X.shape[0]} rows "
          f"({system.value}) -> {model_path}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, cfg: dict) -> int:
    master, forced = _master_seed(args, cfg)
    system = _resolve_system(args, cfg)
    _, test_m = _train_matrix(args, cfg, master, forced)
    out = _out_dir(args, cfg)

    if system is System.BOTOMETER_THRESHOLD:
        tau = _resolve_tau(args, cfg)
        scores = _score_column(test_m, "threshold evaluation")
        preds = [threshold_classify(float(s), tau) for s in scores]
    else:
        raw_model = (args.gbm_model or _section(cfg, "paths").get("gbm_model")
                     or str(out / "model.json"))
        if not Path(raw_model).is_file():
            raise DataError("no trained model found; run train first and point "
                            "[paths].gbm_model at it")
        model = load_gbm(Path(raw_model))
        if tuple(model.schema_names) != test_m.schema.names:
            raise DataError("schema mismatch between features file and model: "
                            f"{list(test_m.schema.names)} vs {list(model.schema_names)}")
        if model.standardization is None:
            raise DataError("model lacks standardization stats; retrain")
        stats = stats_from_dict(model.standardization)
        test_std = apply_standardization(test_m, stats)
        preds = predict_label(model, test_std.X)

    cm = confusion(test_m.labels, preds)
    m = metrics(cm)
    write_metrics_json(cm, m, out / "metrics.json")
    print(f"{system.value}: test n={cm.total} bot-F1={m.bot.f1:.4f} "
          f"non-bot-F1={m.non_bot.f1:.4f} macro-F1={m.macro.f1:.4f} "
          f"-> {out / 'metrics.json'}")
    return EXIT_OK


def cmd_kappa(args: argparse.Namespace, cfg: dict) -> int:
    report = kappa_from_files(args.file_a, args.file_b)
    payload = kappa_report_to_dict(report)
    if args.out:
        out = Path(args.out)
        if out.is_dir():
            out = out / "kappa.json"
        out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(payload))
    return EXIT_OK


def cmd_dist(args: argparse.Namespace, cfg: dict) -> int:
    features_path = _path_from(args, cfg, "features", "features", must_exist=True)
    matrix = read_features_csv(features_path)
    out = _out_dir(args, cfg)
    write_distributions_json(matrix, out / "distributions.json")
    print(f"wrote per-class distributions for {len(matrix.schema)} features "
          f"-> {out / 'distributions.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="force every module seed")
    common.add_argument("--out", help="output directory (default: [paths].out_dir or .)")
    common.add_argument("--system", choices=[s.value for s in System],
                        help="screening system preset")
    common.add_argument("--tau", type=float, help="classification threshold")

    io_flags = argparse.ArgumentParser(add_help=False)
    io_flags.add_argument("--users", help="users.jsonl path")
    io_flags.add_argument("--tweets", help="tweets.jsonl path")
    io_flags.add_argument("--scores", help="scores.jsonl path")
    io_flags.add_argument("--features", help="features.csv path")
    io_flags.add_argument("--lda-model", dest="lda_model", help="lda.json path")
    io_flags.add_argument("--gbm-model", dest="gbm_model", help="model.json path")

    parser = argparse.ArgumentParser(
        prog="botscreen",
        description="Cohort bot-screening pipeline: data synthesis, topic modeling, "
                    "score fetching, feature extraction, training, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--n-bot", type=int, default=None)
    p.add_argument("--n-nonbot", type=int, default=None)
    p.add_argument("--span-days", type=int, default=None)
    p.add_argument("--emit-scores", action="store_true",
                   help="also write synthetic provider scores")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit-lda", parents=[common, io_flags],
                       help="fit the topic model on the training split")
    p.set_defaults(func=cmd_fit_lda)

    p = sub.add_parser("fetch-scores", parents=[common, io_flags],
                       help="fetch provider scores into the cache")
    p.add_argument("--endpoint", help="provider base URL")
    p.set_defaults(func=cmd_fetch_scores)

    p = sub.add_parser("featurize", parents=[common, io_flags],
                       help="build features.csv for the labeled cohort")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common, io_flags],
                       help="train the selected system on the training split")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common, io_flags],
                       help="evaluate the selected system on the held-out split")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("kappa", parents=[common],
                       help="inter-annotator agreement from two annotation CSVs")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("dist", parents=[common, io_flags],
                       help="per-class feature distributions from features.csv")
    p.set_defaults(func=cmd_dist)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ProviderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BotscreenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
