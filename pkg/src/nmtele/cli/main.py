"""``simulate <study> --config <path> [--out <path>] [--threads N]``.

Exit codes: 0 success, 1 invalid config or parameters, 2 numerical failure
(instability or insufficient resolution), 3 file I/O.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..errors import (
    NegligibleProbabilityError,
    NumericalInstabilityError,
    ResolutionError,
    UnsupportedError,
    ValidationError,
)
from .config import STUDIES, ConfigFileError, parse_config
from .results import OutputError, ResultTable, write_csv
from .studies import StudyAborted, run_study

THREADS_ENV = "NMTELE_THREADS"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

log = logging.getLogger("nmtele")


def _env_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        log.warning("ignoring %s=%r: not an integer", THREADS_ENV, raw)
        return 1
    return max(1, n)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simulate", description="Run a teleportation-through-noise study.")
    ap.add_argument("study", choices=STUDIES)
    ap.add_argument("--config", required=True, help="YAML experiment file")
    ap.add_argument("--out", help="CSV output path (default: config 'output', else <study>.csv)")
    ap.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StudyAborted):
        exc = exc.cause
    if isinstance(exc, (ConfigFileError, OutputError, OSError)) and not isinstance(exc, ValidationError):
        return EXIT_IO
    if isinstance(exc, (ValidationError, UnsupportedError)):
        return EXIT_VALIDATION
    if isinstance(exc, (NumericalInstabilityError, ResolutionError, NegligibleProbabilityError, ArithmeticError)):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    default_threads = _env_threads()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    threads = default_threads if args.threads is None else args.threads
    if threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        cfg = parse_config(args.config, args.study)
    except (ConfigFileError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)

    out = Path(args.out or cfg.output_path or f"{cfg.study}.csv")
    log.info("running %s with %d thread(s) -> %s", cfg.study, threads, out)
    table: ResultTable | None = None
    code = EXIT_OK
    try:
        table = run_study(cfg, threads)
    except StudyAborted as exc:
        table = exc.partial
        table.provenance["status"] = f"aborted: {exc}"
        print(f"error: {exc} (partial results written)", file=sys.stderr)
        code = exit_code_for(exc)
    except (ValidationError, UnsupportedError, ArithmeticError) as exc:
        print(f"error: {cfg.study} study: {exc}", file=sys.stderr)
        return exit_code_for(exc)

    try:
        write_csv(table, out)
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
