"""Command-line entry point.

Commands: describe, train, evaluate, tune, predict, report. Flags
override config keys, which override defaults. Exit codes: 0 success,
1 pipeline error, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .pipeline import (
    PROTOCOLS,
    PipelineConfig,
    cmd_describe,
    cmd_evaluate,
    cmd_predict,
    cmd_report,
    cmd_train,
    cmd_tune,
)

EXIT_OK = 0
EXIT_PIPELINE = 1
EXIT_USAGE = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="pipeline configuration JSON")
    parser.add_argument("--seed", type=int, metavar="N", help="master seed (overrides config)")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    parser.add_argument(
        "--protocol",
        choices=["leakage-safe", "paper"],
        help="stage ordering protocol (overrides config)",
    )
    parser.add_argument("--threads", type=int, metavar="N", help="worker hint (overrides config)")
    parser.add_argument("--data", metavar="PATH", help="dataset CSV path (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quakegrade", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, doc in (
        ("describe", "write numeric stats, frequency tables, and correlations"),
        ("train", "run the pipeline and persist model artifacts"),
        ("evaluate", "score stored artifacts on the test split"),
        ("tune", "cross-validated hyperparameter search"),
        ("report", "re-render tables from a stored report.json"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_common(p)

    p = sub.add_parser("predict", help="predict grades for a feature CSV")
    _add_common(p)
    p.add_argument("--artifact", required=True, metavar="PATH", help="stored model artifact")
    p.add_argument("--input", required=True, metavar="CSV", help="feature CSV to score")
    p.add_argument("--output", required=True, metavar="CSV", help="prediction CSV to write")
    return parser


def resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.protocol is not None:
        cfg.protocol = args.protocol.replace("-", "_")
    if args.threads is not None:
        cfg.threads = args.threads
    if getattr(args, "data", None):
        cfg.dataset.path = args.data
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "describe":
            paths = cmd_describe(cfg)
            for p in paths:
                print(p)
        elif args.command == "train":
            print(cmd_train(cfg))
        elif args.command == "evaluate":
            rendered = cmd_evaluate(cfg)
            print(rendered["text"])
        elif args.command == "tune":
            print(cmd_tune(cfg))
        elif args.command == "report":
            rendered = cmd_report(cfg)
            print(rendered["text"])
        elif args.command == "predict":
            print(cmd_predict(args.artifact, args.input, args.output))
    except (ConfigError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
