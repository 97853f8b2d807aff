"""
Command-line front end.

Usage:
    qgraph run --config data/configs/wegner.json
    qgraph wegner --config data/configs/wegner.json --seed 7 --out data/runs
    qgraph params-validate --d 1 --tau 2
"""

import argparse
import os
import sys
from typing import List, Optional, get_args

from loguru import logger
from pydantic import ValidationError

from .models import ExperimentConfig, ExperimentKind
from .pipeline import ExperimentPipeline

LOG_LEVEL_ENV = "QGRAPH_LOG_LEVEL"
KINDS = get_args(ExperimentKind)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgraph", description="Spectral experiments on random quantum graphs"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in ("run", *KINDS):
        sub = subparsers.add_parser(
            name,
            help="run the kind named in the config" if name == "run" else f"run a {name} experiment",
        )
        sub.add_argument("--config", default=None, help="experiment config JSON")
        sub.add_argument("--seed", type=int, default=None, help="override the config seed")
        sub.add_argument("--out", default=None, help="artifact root directory")
        sub.add_argument("--workers", type=int, default=None, help="Monte-Carlo worker count")
        sub.add_argument("--log-level", default=None, help="loguru level (default INFO)")
        if name == "params-validate":
            sub.add_argument("--d", type=float, default=None, help="growth degree")
            sub.add_argument("--tau", type=float, default=None, help="disorder exponent")
    return parser


def configure_logging(level: Optional[str]) -> None:
    logger.remove()
    logger.add(sys.stderr, level=(level or os.getenv(LOG_LEVEL_ENV, "INFO")).upper())


def _load(args: argparse.Namespace, pipeline: ExperimentPipeline) -> ExperimentConfig:
    if args.config is None:
        if args.command != "params-validate":
            raise ValueError(f"{args.command} needs --config")
        params = {key: getattr(args, key) for key in ("d", "tau") if getattr(args, key) is not None}
        return ExperimentConfig(
            kind="params-validate", seed=args.seed if args.seed is not None else 0, params=params
        )
    config = pipeline.load_config(args.config)
    update = {}
    if args.command != "run":
        update["kind"] = args.command
    if args.seed is not None:
        update["seed"] = args.seed
    if args.command == "params-validate":
        for key in ("d", "tau"):
            if getattr(args, key) is not None:
                update["params"] = {**config.params, **update.get("params", {}), key: getattr(args, key)}
    if update:
        config = ExperimentConfig.model_validate({**config.model_dump(), **update})
    return config


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one experiment and return its exit status."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    pipeline = ExperimentPipeline(output_dir=args.out, workers=args.workers)
    try:
        config = _load(args, pipeline)
    except (ValidationError, ValueError, FileNotFoundError) as e:
        logger.error(f"Invalid configuration: {e}")
        return 2

    result = pipeline.run(config)
    if result.status == 0:
        for name, path in result.artifacts.items():
            logger.info(f"{name}: {path}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
