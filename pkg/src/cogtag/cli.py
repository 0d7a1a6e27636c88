"""Batch CLI: ingest a dump, train topics, run the benchmark."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

# Add src to path for the flat modules
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(__file__))))

from rich.console import Console
from rich.logging import RichHandler

from config import ENV_PREFIX, LOG_LEVELS, ConfigError, ExperimentConfig, load_config
from config_validator import print_report, run_validation
from evaluation import (
    ALGORITHM_NAMES,
    TopicModelRequiredError,
    print_reports,
    run_benchmark,
    stats_table,
    write_query_log,
    write_stats,
    write_combined_summary,
    write_summary,
)
from folksonomy import Folksonomy, FolksonomyError, build_folksonomy
from ingest import NoPostsParsedError, PreprocessConfig, SplitResult, parse_dump, preprocess, split_train_test, write_dump
from run_manifest import RunManifest, digest_files
from topic_model import EmptyCorpusError, build_documents, load_model, save_model, train_lda

logger = logging.getLogger("cogtag")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    s = argparse.SUPPRESS
    g.add_argument("--config", default=s, help="Experiment config file (key=value, optional [experiment] section)")
    g.add_argument("--log-level", dest="log_level", type=str.upper, choices=LOG_LEVELS, default=s)
    g.add_argument("--output-dir", dest="output_dir", default=s, help="Directory for posts, models and results")
    g.add_argument("--dataset", dest="dataset_path", default=s, help="Raw post dump (user, resource, timestamp, tags)")
    g.add_argument("--format", dest="format", default=s, help="Dump format (default: tsv)")
    g.add_argument("--blacklist", dest="blacklist_path", default=s, help="Tag blacklist file, one tag per line")
    g.add_argument("--lowercase", dest="lowercase", action=argparse.BooleanOptionalAction, default=s)
    g.add_argument("--sample-fraction", dest="sample_fraction", type=float, default=s)
    g.add_argument("--sample-seed", dest="sample_seed", type=int, default=s)
    g.add_argument("--min-posts", dest="min_posts", type=int, default=s, help="Posts needed to be an evaluation user")
    g.add_argument("--lda-topics", dest="lda_topics", type=int, default=s)
    g.add_argument("--lda-alpha", dest="lda_alpha", type=float, default=s, help="Default: 50 / topics")
    g.add_argument("--lda-eta", dest="lda_eta", type=float, default=s)
    g.add_argument("--lda-seed", dest="lda_seed", type=int, default=s)
    g.add_argument("--lda-iterations", dest="lda_iterations", type=int, default=s)
    g.add_argument("--lda-on-full", dest="lda_on_full", action=argparse.BooleanOptionalAction, default=s,
                   help="Train topics on the full folksonomy instead of the train split")
    g.add_argument("--model-path", dest="model_path", default=s, help="Topic model file (default: <output-dir>/topic_model.tsv)")
    g.add_argument("--beta", dest="beta", type=float, default=s)
    g.add_argument("--decay", dest="decay", type=float, default=s)
    g.add_argument("--cf-neighbors", dest="cf_neighbors", type=int, default=s)
    g.add_argument("--damping", dest="damping", type=float, default=s)
    g.add_argument("--pagerank-tol", dest="pagerank_tol", type=float, default=s)
    g.add_argument("--pagerank-max-iter", dest="pagerank_max_iter", type=int, default=s)
    g.add_argument("--girptm-mu", dest="girptm_mu", type=float, default=s)
    g.add_argument("--algorithms", dest="algorithms", default=s,
                   help=f"Comma-separated subset of: {', '.join(ALGORITHM_NAMES)}")
    g.add_argument("--strict-precision", dest="strict_precision", action=argparse.BooleanOptionalAction, default=s,
                   help="Divide precision by k even when fewer tags are recommended")
    g.add_argument("--workers", dest="workers", type=int, default=s)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogtag",
        description="Cognitive-inspired tag recommenders and their time-aware benchmark",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  cogtag ingest   --dataset dumps/delicious.tsv --output-dir runs/del
  cogtag topics   --output-dir runs/del --lda-topics 1000
  cogtag evaluate --output-dir runs/del --algorithms mp,cf,3l,3lt,3lt_mpr
  cogtag validate --config experiment.ini
        """,
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name, help_text in (
        ("ingest", "Parse, clean and sample a dump; write posts.tsv and stats.tsv"),
        ("topics", "Train the resource topic model on the train split"),
        ("evaluate", "Run the benchmark and write summary CSVs and per-query logs"),
        ("validate", "Check an experiment configuration"),
    ):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        _add_common_flags(sp)
        if name == "validate":
            sp.add_argument("--json", action="store_true", help="Output JSON instead of text")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k in ExperimentConfig.model_fields}


def _load_folksonomy(cfg: ExperimentConfig) -> Folksonomy:
    if not cfg.posts_path.is_file():
        raise UsageError(f"No ingested posts at {cfg.posts_path}; run 'cogtag ingest' first")
    posts, _ = parse_dump(cfg.posts_path)
    return build_folksonomy(posts)


def _split(cfg: ExperimentConfig, f: Folksonomy) -> SplitResult:
    return split_train_test(f, PreprocessConfig(min_user_posts_for_eval=cfg.min_posts))


def _seeds(cfg: ExperimentConfig) -> Dict[str, int]:
    return {"sample_seed": cfg.sample_seed, "lda_seed": cfg.lda_seed}


def cmd_ingest(cfg: ExperimentConfig, console: Console) -> int:
    if not cfg.dataset_path or not Path(cfg.dataset_path).is_file():
        raise UsageError(f"Dataset not found: {cfg.dataset_path}")
    posts, report = parse_dump(cfg.dataset_path, cfg.format)
    cleaned = preprocess(posts, cfg.to_preprocess_config())
    if not cleaned:
        raise NoPostsParsedError("no posts left after preprocessing")
    f = build_folksonomy(cleaned)
    write_dump(f.posts, cfg.posts_path)
    write_stats(f.stats, cfg.stats_path)
    console.print(stats_table(f.stats))
    if report.skipped:
        console.print(f"[yellow]Skipped {report.skipped} malformed rows of {report.rows}[/yellow]")

    RunManifest(
        command="ingest",
        config=cfg.model_dump(),
        seeds=_seeds(cfg),
        inputs=digest_files([cfg.dataset_path, cfg.blacklist_path]),
        outputs=digest_files([cfg.posts_path, cfg.stats_path]),
    ).write(cfg.output_dir)
    return EXIT_OK


def cmd_topics(cfg: ExperimentConfig, console: Console) -> int:
    f = _load_folksonomy(cfg)
    source = f if cfg.lda_on_full else _split(cfg, f).train
    lda_cfg = cfg.to_lda_config()
    logger.info("Training topics on the %s folksonomy: Z=%d, seed=%d, iterations=%d",
                "full" if cfg.lda_on_full else "train", lda_cfg.num_topics, lda_cfg.seed, lda_cfg.iterations)
    model = train_lda(build_documents(source), lda_cfg)
    path = cfg.resolved_model_path
    save_model(model, path)
    console.print(f"Topic model with {len(model.resource_topics)} resources written to {path}")

    RunManifest(
        command="topics",
        config=cfg.model_dump(),
        seeds=_seeds(cfg),
        inputs=digest_files([cfg.posts_path]),
        outputs=digest_files([path]),
    ).write(cfg.output_dir)
    return EXIT_OK


def cmd_evaluate(cfg: ExperimentConfig, console: Console) -> int:
    f = _load_folksonomy(cfg)
    model = None
    if cfg.needs_topic_model:
        if not cfg.resolved_model_path.is_file():
            raise TopicModelRequiredError()
        model = load_model(cfg.resolved_model_path)
    split = _split(cfg, f)
    console.print(stats_table(split.train.stats, title="Train Statistics", eval_users=len(split.eval_users)))

    reports = run_benchmark(split, cfg.algorithms, model, cfg.to_benchmark_params())
    summary_path, metrics_path = write_summary(reports, cfg.output_dir)
    combined_path = write_combined_summary(reports, cfg.output_dir)
    logs = [write_query_log(rep, cfg.output_dir) for rep in reports]
    print_reports(reports, console)

    RunManifest(
        command="evaluate",
        config=cfg.model_dump(),
        seeds=_seeds(cfg),
        inputs=digest_files([cfg.posts_path, cfg.resolved_model_path if model is not None else None]),
        outputs=digest_files([summary_path, metrics_path, combined_path, *logs]),
    ).write(cfg.output_dir)
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, as_json: bool) -> int:
    report = run_validation(cfg)
    print_report(report, as_json=as_json)
    return EXIT_RUNTIME if report.has_failures else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(getattr(args, "log_level", None) or os.getenv(f"{ENV_PREFIX}LOG_LEVEL", "INFO").upper())
    console = Console()
    try:
        cfg = load_config(getattr(args, "config", None), overrides=_overrides(args))
    except ConfigError as e:
        parser.print_usage(sys.stderr)
        print(f"cogtag: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.getLogger().setLevel(cfg.log_level)

    try:
        if args.command == "ingest":
            return cmd_ingest(cfg, console)
        if args.command == "topics":
            return cmd_topics(cfg, console)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, console)
        return cmd_validate(cfg, as_json=args.json)
    except (UsageError, TopicModelRequiredError) as e:
        print(f"cogtag: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NoPostsParsedError, EmptyCorpusError, FolksonomyError, OSError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
