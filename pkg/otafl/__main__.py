import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv

from . import __version__
from .config import EnvSettings, ExperimentConfig, load_config, with_overrides
from .errors import ConfigError, OtaflError
from .experiment import run_experiment, run_selection_study
from .selection import SelectionMethod

# --- Basic Setup ---
# Load environment variables from .env file
load_dotenv()

LOGGER = logging.getLogger("otafl")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _setup_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def _seeds(text: str):
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be a comma list of integers, got {text!r}")


def _methods(text: str):
    try:
        return tuple(SelectionMethod(part.strip()) for part in text.split(",") if part.strip())
    except ValueError:
        names = ", ".join(m.value for m in SelectionMethod)
        raise argparse.ArgumentTypeError(f"method must be one of {names}, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otafl", description="Over-the-air federated learning with device selection"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="train every method over every seed and write metric files")
    run.add_argument("--config", help="experiment config file (full-scale defaults if omitted)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seeds", type=_seeds, help="comma list of master seeds")
    run.add_argument("--method", type=_methods, help="comma list of methods")
    run.add_argument("--workers", type=int, help="parallel replicas")

    study = commands.add_parser("select", help="run selection only over channel draws")
    study.add_argument("--config", help="experiment config file (full-scale defaults if omitted)")
    study.add_argument("--draws", type=int, default=20, help="number of channel realizations")
    study.add_argument("--method", type=_methods, help="comma list of methods")
    study.add_argument("--out", help="JSON file to write (stdout if omitted)")
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    return with_overrides(
        config,
        seeds=getattr(args, "seeds", None),
        method=args.method,
        output=getattr(args, "out", None) if args.command == "run" else None,
    )


def _run(args) -> int:
    config = _load(args)
    result = asyncio.run(run_experiment(config, workers=args.workers))
    LOGGER.info(f"Results in {result.output_dir}")
    return EXIT_OK


def _select(args) -> int:
    config = _load(args)
    report = json.dumps(run_selection_study(config, args.draws), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(report, encoding="utf-8")
        LOGGER.info(f"Wrote {args.out}")
    else:
        sys.stdout.write(report)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(EnvSettings().log_level)
    handler = _run if args.command == "run" else _select
    try:
        return handler(args)
    except ConfigError as e:
        LOGGER.error(f"Invalid configuration: {e}")
        print(f"otafl: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OtaflError as e:
        LOGGER.error(f"Experiment failed: {e}")
        print(f"otafl: error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as e:
        LOGGER.error(f"I/O failure: {e}")
        print(f"otafl: error: {e}", file=sys.stderr)
        return EXIT_FAILURE


# --- Main Execution ---
if __name__ == "__main__":
    sys.exit(main())
