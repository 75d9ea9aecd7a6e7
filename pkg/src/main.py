"""
HOMP Toolkit - command-line entry point.

    python -m src.main --config run.json [--out DIR] [--seed N] [--quiet]

HOW THIS FILE WORKS:
-------------------
1. Parse the flags and load the JSON run document into a RunConfig
2. Apply the command-line overrides (--seed, --out)
3. Dispatch to the command in src.cli.commands
4. Turn whatever went wrong into an exit code and a one-line message on stderr

EXIT CODES:
-----------
    0  success
    2  configuration or I/O error (bad document, bad CSV, bad grid, unwritable output)
    3  numerical failure (negative diffusion, divergence, degenerate density)
    4  optimiser did not converge, or a diagnostic missed its tolerance
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from src.cli.commands import COMMANDS
from src.core.config import get_settings
from src.core.errors import ConfigError, HompError
from src.models.run import RunConfig

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="homp",
        description=f"{settings.APP_NAME}: simulate, fit and check higher-order Markov processes",
    )
    parser.add_argument("--config", required=True, type=Path, help="JSON run document")
    parser.add_argument("--out", type=Path, default=None, help="Output directory")
    parser.add_argument("--seed", type=int, default=None, help="Override the document's seed")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    return parser


def load_config(path: Path) -> RunConfig:
    """Read and validate a run document."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e
    return RunConfig.model_validate_json(text)


def _configure_logging(quiet: bool) -> None:
    level = logging.WARNING if quiet else getattr(logging, get_settings().LOG_LEVEL, logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        force=True,
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    _configure_logging(args.quiet)

    try:
        config = load_config(args.config)
        updates: dict = {}
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
            updates["seed"] = args.seed
        if args.out is not None:
            updates["out_dir"] = str(args.out)
        config = config.model_copy(update=updates)
        out_dir = Path(config.out_dir or get_settings().DEFAULT_OUT_DIR)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"cannot create output directory {out_dir}: {e.strerror or e}") from e

        logger.info(f"Running '{config.command}' (seed={config.seed}) into {out_dir}")
        return COMMANDS[config.command](config, out_dir)
    except ValidationError as e:
        logger.error(f"Invalid run document: {e.error_count()} error(s)")
        print(f"error: invalid configuration\n{e}", file=sys.stderr)
        return ConfigError.exit_code
    except HompError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
