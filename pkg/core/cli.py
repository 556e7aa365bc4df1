"""
Command-line surface: synth, train, explain, optimize, compare.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from .config import Config
from .models import Report, RunConfig, SyntheticSpec
from .pipeline import Pipeline

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3

COMMANDS = ("synth", "train", "explain", "optimize", "compare")


def exit_code(message: str) -> int:
    """Exit status for an error message prefixed with its code."""
    if message.startswith("[io."):
        return EXIT_IO
    if message.startswith("[cli.ConfigError]"):
        return EXIT_CONFIG
    return EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per pipeline command."""
    parser = argparse.ArgumentParser(
        prog="ebco",
        description="Explanation-based multi-label combinatorial optimization",
    )
    parser.add_argument("--log-level", default=None, help=f"Logging level (default {Config.LOG_LEVEL})")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", type=Path, default=None, help="Run configuration JSON")
        sub.add_argument("--seed", type=int, default=None, help="Override the configured seed")
        sub.add_argument("--out", type=Path, default=None, help="Override the output directory")
        if command == "synth":
            sub.add_argument("--spec", type=Path, default=None, help="Synthetic spec JSON (defaults otherwise)")
        if command == "compare":
            sub.add_argument("--rounds", type=int, default=None, help="Number of seeds to compare")
    return parser


def _read_json(path: Path) -> dict:
    """Read a JSON document from disk."""
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """RunConfig from --config, with command-line overrides applied."""
    document = _read_json(args.config) if args.config is not None else {}

    if args.command == "synth":
        if getattr(args, "spec", None) is not None:
            document["synthetic"] = _read_json(args.spec)
        elif "synthetic" not in document:
            document["synthetic"] = SyntheticSpec().model_dump()
        document.pop("dataset_path", None)
    elif args.config is None:
        raise ValueError(f"'{args.command}' needs --config")

    if args.seed is not None:
        document["seed"] = args.seed
    if args.out is not None:
        document["output_dir"] = str(args.out)
    if getattr(args, "rounds", None) is not None:
        document["rounds"] = args.rounds
    return RunConfig(**document)


def comparison_table(report: Report) -> str:
    """Per-seed text table of a compare report."""
    lines = [f"{'seed':>6} {'target':>8} {'ebco':>8} {'dp':>8} {'ebco<=dp':>9}"]
    for row in report.comparison:
        lines.append(
            f"{row.seed:>6} {row.target_objective:>8.4f} {str(row.ebco_evaluations):>8} "
            f"{str(row.dp_evaluations):>8} {str(row.ebco_not_worse):>9}"
        )
    wins = sum(row.ebco_not_worse for row in report.comparison)
    lines.append(f"EBCO needed no more evaluations than DP on {wins}/{len(report.comparison)} seeds")
    return "\n".join(lines)


def run_command(pipeline: Pipeline, command: str):
    """Dispatch a subcommand to its pipeline method."""
    handlers = {
        "synth": pipeline.synth,
        "train": pipeline.train,
        "explain": pipeline.explain_command,
        "optimize": pipeline.optimize,
        "compare": pipeline.compare,
    }
    return handlers[command]()


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return the exit status."""
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=(args.log_level or Config.LOG_LEVEL).upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    is_valid, issues = Config.validate_config()
    if not is_valid:
        for issue in issues:
            logger.error(f"Configuration issue: {issue}")
        return EXIT_CONFIG

    try:
        config = load_run_config(args)
    except OSError as e:
        logger.error(f"Cannot read configuration: {e}")
        print(f"[io.{type(e).__name__}] {e}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"[cli.ConfigError] {e}", file=sys.stderr)
        return EXIT_CONFIG

    report, error = run_command(Pipeline(config), args.command)
    if error:
        print(error, file=sys.stderr)
        return exit_code(error)

    if args.command == "compare":
        print(comparison_table(report))
    elif report.best is not None:
        print(f"Best assignment: {report.best.assignment.bindings} (Gamma {report.best.big_gamma:.4f})")
    print(f"Outputs written to {config.output_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
