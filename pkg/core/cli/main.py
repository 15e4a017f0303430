"""
seqmem command line.

    seqmem {fit-laes|train|grid|probe-grad|probe-reco|reconstruct|eval} --config <path>
           [--init-from <ckpt>] [--checkpoint <ckpt>] [--out <dir>] [--seed <u64>]
           [--epochs <n>] [--sample-index <i>] [--jobs <n>]
           [--log-level L] [--log-format F] [--log-file P]

Exit codes: 0 success, 1 unexpected error, 2 configuration or input error,
3 numerical divergence.
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from core.cli.commands import COMMANDS
from core.cli.config import load_config
from core.exceptions import CheckpointError, ConfigError, DatasetError, DivergenceError, ShapeError
from core.logging_config import configure_from_args

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INPUT = 2
EXIT_DIVERGENCE = 3

logger = logging.getLogger("seqmem")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqmem",
        description="Closed-form sequence autoencoders, LAES-initialized recurrent networks and memory diagnostics",
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="Experiment step to run")
    parser.add_argument("--config", required=True, help="Flat key=value experiment config")
    parser.add_argument("--init-from", default=None, help="Checkpoint to initialize or resume from")
    parser.add_argument("--checkpoint", default=None, help="Checkpoint to probe, reconstruct with or evaluate")
    parser.add_argument("--out", default=None, help="Output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, default=None, help="Seed (overrides seed)")
    parser.add_argument("--epochs", type=int, default=None, help="Epochs (overrides epochs)")
    parser.add_argument("--sample-index", type=int, default=0, help="Sequence to reconstruct")
    parser.add_argument("--jobs", type=int, default=1, help="Parallel grid cells")
    parser.add_argument(
        "--log-level",
        type=str,
        default=os.getenv("LOG_LEVEL", "INFO"),
        help="Logging level (DEBUG, INFO, WARNING, ERROR)",
    )
    parser.add_argument("--log-format", type=str, default="plain", choices=["plain", "json"])
    parser.add_argument("--log-file", type=str, default=None, help="Path to a rotating log file")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_from_args(args)

    try:
        config = load_config(
            args.config,
            {"output_dir": args.out, "seed": args.seed, "epochs": args.epochs},
        )
        return COMMANDS[args.command](config, args)
    except DivergenceError as exc:
        logger.error("💥 Training diverged: %s", exc)
        return EXIT_DIVERGENCE
    except (ConfigError, DatasetError, CheckpointError, ShapeError, FileNotFoundError) as exc:
        logger.error("❌ %s", exc)
        return EXIT_INPUT
    except Exception:
        logger.exception("❌ Unexpected failure in %s", args.command)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
