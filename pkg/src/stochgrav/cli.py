"""Command-line entry point.

    stochgrav <subcommand> [--config PATH] [--seed N] [--workers N]
              [--output PATH] [--format csv|json] [key=value ...]

Exit codes: 0 success, 1 bound or acceptance failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .config import EXPERIMENTS, build_config, parse_assignments, read_config_file
from .errors import StochGravError
from .io import json_text
from .runners import RUNNERS, VALIDATORS, sidecar_path

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _config_error(message)


def _config_error(message: str):
    sys.stderr.write(f"error: config: {' '.join(str(message).split())}\n")
    sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stochgrav", description="Stochastic-gravitation model experiments.")
    parser.add_argument("subcommand", choices=EXPERIMENTS)
    parser.add_argument("--config", help="key=value file, or a JSON run record to replay")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--output", help="output path (default: standard output)")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("assignments", nargs="*", metavar="key=value")
    return parser


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_intermixed_args(argv)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = build_config(
            args.subcommand,
            file_values,
            parse_assignments(args.assignments),
            {"seed": args.seed, "format": args.format, "workers": args.workers, "output": args.output},
        )
        VALIDATORS[cfg.experiment](cfg)
        start = time.perf_counter()
        outcome = RUNNERS[cfg.experiment](cfg)
        elapsed = time.perf_counter() - start
    except StochGravError as exc:
        _config_error(f"{type(exc).__name__}: {exc}")

    out = sys.stdout if cfg.output_path else sys.stderr
    if cfg.output_path:
        _write(cfg.output_path, outcome.primary)
        if outcome.record is not None:
            _write(sidecar_path(cfg.output_path), json_text(outcome.record.to_dict()))
    else:
        sys.stdout.write(outcome.primary)
    for path, text in outcome.extra_files.items():
        _write(Path(path), text)
    for line in outcome.summary:
        out.write(line + "\n")
    sys.stderr.write(f"wall_time_s={elapsed:.3f}\n")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
