"""Command-line entry point: one subcommand per pipeline stage plus `run`."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .gateway import BackendError
from .graph import WeightMode
from .manifest import STAGE_ORDER, StageError
from .stages import run_all, run_stage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_STAGE = 3
EXIT_BACKEND = 4


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the run config YAML")
    common.add_argument("--force", action="store_true", help="redo completed work")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("--seed", type=int, help="override config seed")
    common.add_argument("--alpha", type=float, help="difficulty/frequency blend in [0,1]")
    common.add_argument("--epsilon", type=float, help="edge weight stabilizer, > 0")
    common.add_argument(
        "--weight-mode", choices=[m.value for m in WeightMode], help="edge weighting scheme"
    )
    common.add_argument("--max-steps", type=int, help="random walk step cap")
    common.add_argument("--num-tests", type=int, help="test inputs per problem (T)")
    common.add_argument("--num-solutions", type=int, help="candidate solutions per problem (M)")
    common.add_argument("--none-threshold", type=float, help="validity filter cutoff")
    common.add_argument("--min-delta", type=float, help="drop selected problems below this delta")

    parser = argparse.ArgumentParser(
        prog="problemforge",
        description="Synthesize hard competitive-programming problems and curate training data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGE_ORDER:
        stage_parser = sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
        if stage == "decontaminate":
            stage_parser.add_argument(
                "--against", nargs="+", metavar="FILE",
                help="benchmark corpora (overrides config paths.benchmarks)",
            )
    sub.add_parser("run", parents=[common], help="run every stage in order (resumable)")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for attr, key in (
        ("seed", "seed"),
        ("alpha", "alpha"),
        ("epsilon", "epsilon"),
        ("max_steps", "max_steps"),
        ("num_tests", "t"),
        ("num_solutions", "m"),
        ("none_threshold", "none_threshold"),
        ("min_delta", "min_delta"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "weight_mode", None) is not None:
        overrides["weight_mode"] = WeightMode(args.weight_mode)
    if not overrides:
        return config
    try:
        return config.override(**overrides)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _apply_overrides(load_config(args.config), args)
        if args.command == "run":
            run_all(config, force=args.force)
        elif args.command == "decontaminate":
            kwargs = {}
            if args.against:
                kwargs["benchmark_paths"] = tuple(Path(p) for p in args.against)
            run_stage(config, args.command, force=args.force, **kwargs)
        else:
            run_stage(config, args.command, force=args.force)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_USAGE
    except StageError as exc:
        logger.error("%s", exc)
        return EXIT_STAGE
    except BackendError as exc:
        logger.error("backend error: %s", exc)
        return EXIT_BACKEND
    except ValueError as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
