"""Command-line driver: ``python -m fedaugment <command>``."""
from __future__ import annotations

import argparse
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from dotenv import load_dotenv

from .reporting import emit_reports
from .sim.engine import (
    augment_from_bank,
    efficacy_from_bank,
    load_run,
    run_experiment,
    train_bank,
)
from .sim.errors import ConfigError, FedAugmentError, ParseError, SchemaError
from .sim.utils import GAN_STRATEGIES, STRATEGIES, ExperimentConfig, load_experiment_config, with_overrides

logger = logging.getLogger("fedaugment")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedaugment", description="Federated tabular augmentation experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="experiment config JSON")
    common.add_argument("--strategy", action="append", choices=STRATEGIES, help="repeatable; defaults to the config")
    common.add_argument("--alpha", action="append", type=float, help="Dirichlet concentration, repeatable")
    common.add_argument("--nodes", type=int, default=None)
    common.add_argument("--seed", action="append", type=int, help="repeatable; replaces the configured seeds")
    common.add_argument("--repeats", type=int, default=None)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="full strategy x alpha x seed matrix")
    run.add_argument("--image-format", default="png", choices=["png", "svg", "pdf", "html"])
    sub.add_parser("gan", parents=[common], help="train and save generators only")
    augment = sub.add_parser("augment", parents=[common], help="augmentation loop from a saved generator")
    augment.add_argument("--bank", type=Path, required=True)
    efficacy = sub.add_parser("efficacy", parents=[common], help="train-on-synthetic check for a saved generator")
    efficacy.add_argument("--bank", type=Path, required=True)
    report = sub.add_parser("report", parents=[common], help="re-emit charts and tables for a finished run")
    report.add_argument("--image-format", default="png", choices=["png", "svg", "pdf", "html"])
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_experiment_config(args.config)
    repeats = args.repeats
    if args.seed and repeats is None:
        repeats = len(args.seed)
    elif repeats is not None and not args.seed and cfg.seeds:
        cfg = cfg.copy(update={"seeds": None})
    return with_overrides(
        cfg,
        strategies=args.strategy,
        alphas=args.alpha,
        n_nodes=args.nodes,
        seeds=args.seed,
        repeats=repeats,
        output_dir=str(args.out) if args.out is not None else None,
    )


def _cmd_run(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    result = run_experiment(cfg)
    written = emit_reports(result.records, result.histories, result.efficacy, result.out_dir, args.image_format)
    print(result.summary.to_string(index=False))
    print(f"{len(result.records)} records, {len(written)} report files in {result.out_dir}")
    return EXIT_OK


def _cmd_gan(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    strategies = [s for s in cfg.strategies if s in GAN_STRATEGIES]
    if not strategies:
        raise ConfigError(f"gan needs one of {list(GAN_STRATEGIES)} among the strategies")
    for strategy in strategies:
        for alpha in cfg.alphas:
            for seed in cfg.seed_list():
                print(train_bank(cfg, strategy, alpha, seed))
    return EXIT_OK


def _cmd_augment(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    result = augment_from_bank(cfg, args.bank)
    history = result.history
    print(json.dumps(asdict(result.record), indent=2))
    if history is not None:
        for record in history.records:
            print(f"step {record.step:>3}  synthetic {record.synthetic_rows:>7}  accuracy {record.accuracy:.4f}")
    return EXIT_OK


def _cmd_efficacy(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    print(json.dumps(asdict(efficacy_from_bank(cfg, args.bank)), indent=2))
    return EXIT_OK


def _cmd_report(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    out_dir = Path(args.out or cfg.output_dir)
    records, histories, reports = load_run(out_dir)
    if not records:
        logger.error("no cell results under %s", out_dir)
        return EXIT_FAILED
    for path in sorted(emit_reports(records, histories, reports, out_dir, args.image_format)):
        print(path)
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "gan": _cmd_gan,
    "augment": _cmd_augment,
    "efficacy": _cmd_efficacy,
    "report": _cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, SchemaError, ParseError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_CONFIG
    except FedAugmentError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILED


__all__ = ["build_parser", "resolve_config", "main"]
