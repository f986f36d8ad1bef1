# -*- coding: utf-8 -*-
"""
stegmesh command line interface
===============================

    run     --scenario <path> --seed <u64> --limit <ticks> --out <dir>
    verify  --scenario <path> --seed <u64> [--limit <ticks>]
    report  --trace <path>

Outputs are a pure function of (scenario bytes, seed, limit); logging goes
to standard error and never into the output files.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src.core.constants import (
    DEFAULT_RUN_LIMIT,
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_VALIDATION,
    METRICS_FILE,
    REPORT_FILE,
    TRACE_FILE,
)
from src.core.exceptions import ScenarioError, StegMeshError
from src.core.scenario import load_scenario
from src.core.world import build_world, run_until
from src.utils.data_transfer import export_metrics_to_file
from src.utils.logger import setup_logger
from src.version import VERSION

logger = logging.getLogger("stegmesh.cli")

U64_MAX = 2 ** 64 - 1


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _ticks(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("limit must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stegmesh",
        description="Deterministic simulator for covert steg-link routing between MANET cluster heads.",
    )
    parser.add_argument("--version", action="version", version=f"stegmesh {VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write trace, report and metrics")
    run.add_argument("--scenario", required=True, type=Path, metavar="PATH")
    run.add_argument("--seed", required=True, type=_seed, metavar="U64")
    run.add_argument("--limit", type=_ticks, default=DEFAULT_RUN_LIMIT, metavar="TICKS")
    run.add_argument("--out", required=True, type=Path, metavar="DIR")
    run.add_argument("--until-limit", action="store_true",
                     help="keep stepping after quiescence until the tick limit")

    verify = sub.add_parser("verify", help="run the scenario and check it against the oracles")
    verify.add_argument("--scenario", required=True, type=Path, metavar="PATH")
    verify.add_argument("--seed", required=True, type=_seed, metavar="U64")
    verify.add_argument("--limit", type=_ticks, default=DEFAULT_RUN_LIMIT, metavar="TICKS")

    report = sub.add_parser("report", help="summarise an existing trace")
    report.add_argument("--trace", required=True, type=Path, metavar="PATH")
    return parser


# ────────────────────────── Commands ──────────────────────────

def cmd_run(scenario: Path, seed: int, limit: int, out: Path, until_limit: bool = False) -> int:
    spec = load_scenario(scenario)
    world = build_world(spec, seed)
    report = run_until(world, limit, stop_at_quiescence=not until_limit)

    out.mkdir(parents=True, exist_ok=True)
    ok = world.trace.write(out / TRACE_FILE)
    ok = report.write(str(out / REPORT_FILE)) and ok
    ok = export_metrics_to_file(world.metrics_rows, out / METRICS_FILE) and ok
    if not ok:
        raise StegMeshError(f"could not write all outputs to {out}")

    for line in report.summary():
        print(line)
    print(f"wrote {TRACE_FILE}, {REPORT_FILE}, {METRICS_FILE} to {out}")
    return EXIT_OK


def cmd_verify(scenario: Path, seed: int, limit: int = DEFAULT_RUN_LIMIT) -> int:
    from src.tools.verify import verify_scenario

    spec = load_scenario(scenario)
    result = verify_scenario(spec, seed, limit)
    print(result.summary())
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


def cmd_report(trace: Path) -> int:
    from src.tools.trace_summary import summarize_file

    summary = summarize_file(trace)
    for line in summary.lines():
        print(line)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logger("stegmesh", level="debug" if args.verbose else None)

    try:
        if args.command == "run":
            return cmd_run(args.scenario, args.seed, args.limit, args.out, args.until_limit)
        if args.command == "verify":
            return cmd_verify(args.scenario, args.seed, args.limit)
        return cmd_report(args.trace)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except StegMeshError as e:
        print(f"error: {e}", file=sys.stderr)
        logger.debug("run failed", exc_info=True)
        return EXIT_RUNTIME
    except Exception as e:
        print(f"unexpected error: {e}", file=sys.stderr)
        logger.debug("unexpected failure", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
