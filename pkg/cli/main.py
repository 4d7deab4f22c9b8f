"""Command-line entry point.

Usage:
    python -m cli.main solve --config run.json --out runs/saddle
    python -m cli.main validate --config run.json --out runs/vee --threads 4
    python -m cli.main report --config run.json --out runs/vee
    python -m cli.main reduce --config run.json --problem-file my_problem.json --out runs/mine

Exit codes: 0 success, 1 numerical or assumption failure, 2 config error.
"""

import argparse
import logging
import sys
from pathlib import Path

# Ensure project root is on the path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from dotenv import load_dotenv

from cli.config_schema import COMMANDS, parse_config
from cli.handlers import EXIT_CONFIG, run_command
from services.exceptions import ConfigError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minimax-infer",
        description="Stochastic minimax estimation, limit laws and Monte Carlo validation.",
    )
    parser.add_argument("command", choices=COMMANDS, help="Pipeline step to run")
    parser.add_argument("--config", required=True, help="Path to the JSON run config")
    parser.add_argument(
        "--problem-file", default=None, help="Inline problem document replacing the config's problem"
    )
    parser.add_argument("--out", default=None, help="Output directory (overrides the config)")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for replications")
    parser.add_argument("--force", action="store_true", help="Overwrite a non-empty output directory")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s: %(name)s: %(message)s")
    load_dotenv()

    try:
        config = parse_config(args.config, args.problem_file)
    except ConfigError as exc:
        logging.getLogger(__name__).error("%s (at %s)", exc, ", ".join(exc.pointers))
        return EXIT_CONFIG
    return run_command(config, args.command, args.out, args.threads, args.force)


if __name__ == "__main__":
    sys.exit(main())
