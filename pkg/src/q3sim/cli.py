"""Command-line entry point.

One subcommand per experiment plus ``analyze`` for offline count tables.
Exit codes: 0 success, 2 scenario or input validation failure, 3 runtime
failure while simulating.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time

from . import __version__
from . import runner
from .analysis import sorkin_kappa
from .errors import (BudgetError, ConfigurationError, DataError, DomainError,
                     ParameterError, Q3SimError, ValidationError)
from .scenario import load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_VALIDATION_ERRORS = (ValidationError, ParameterError, DataError,
                      ConfigurationError, BudgetError, DomainError)

_EXPERIMENT_HELP = {
    "g2": "second-order autocorrelation through the monitor tap pair",
    "born": "eight-configuration triple test and kappa statistic",
    "calibrate": "phase-shifter calibration scan",
    "passes": "ground-station contact windows",
    "power": "orbit-average energy margin",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", metavar="PATH",
                   help="scenario JSON file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, metavar="N",
                   help="override the scenario seed")
    p.add_argument("--out", metavar="DIR",
                   help="output directory for report.json (+ CSV tables); stdout when omitted")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="report format (csv adds per-experiment tables)")
    p.add_argument("--strict-mission", action="store_true",
                   help="reject altitudes outside the 487-604 km mission band")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="q3sim",
        description="Digital twin of a three-path photonic payload and its orbit.")
    parser.add_argument("--version", action="version",
                        version=f"q3sim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _EXPERIMENT_HELP.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
    p = sub.add_parser("analyze",
                       help="kappa statistic from a measured count table")
    p.add_argument("--counts", required=True, metavar="PATH",
                   help="CSV with header config,counts,shots (8 rows)")
    p.add_argument("--bootstrap-seed", type=int, metavar="N",
                   help="also bootstrap the kappa uncertainty")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def _emit(report: dict, out: str | None, fmt: str) -> None:
    if out is None:
        if fmt == "csv":
            raise ValidationError("--out", "csv format needs an output directory")
        sys.stdout.write(runner.dumps_report(report))
        return
    for path in runner.emit_report(report, out, fmt):
        print(f"q3sim: wrote {path}", file=sys.stderr)


def _read_count_table(path: str) -> tuple[dict, dict, dict]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ValidationError("counts", f"cannot read file: {exc}")
    if not rows or not {"config", "counts", "shots"} <= set(rows[0]):
        raise ValidationError("counts",
                              "need a CSV with header config,counts,shots")
    p_hat, sigma, counts = {}, {}, {}
    for row in rows:
        label = (row["config"] or "").strip()
        try:
            n = int(row["counts"])
            shots = int(row["shots"])
        except (TypeError, ValueError):
            raise ValidationError("counts", f"bad row for config '{label}'")
        if shots <= 0 or n < 0 or n > shots:
            raise ValidationError(
                "counts", f"config '{label}' needs 0 <= counts <= shots")
        p = n / shots
        p_hat[label] = p
        sigma[label] = math.sqrt(max(p * (1.0 - p), 1.0 / shots) / shots)
        counts[label] = n
    return p_hat, sigma, counts


def _run_analyze(args: argparse.Namespace) -> dict:
    started = time.perf_counter()
    p_hat, sigma, counts = _read_count_table(args.counts)
    result = sorkin_kappa(p_hat, sigma, counts=counts,
                          bootstrap_seed=args.bootstrap_seed)
    return {
        "schema_version": runner.SCHEMA_VERSION,
        "tool": {"name": "q3sim", "version": __version__},
        "experiment": "analyze",
        "scenario": {"counts_file": args.counts,
                     "bootstrap_seed": args.bootstrap_seed},
        "results": {"sorkin": result.to_dict()},
        "wall_time_s": time.perf_counter() - started,
    }


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        if args.command == "analyze":
            report = _run_analyze(args)
        else:
            scenario_data = args.scenario if args.scenario is not None else {}
            scenario = load_scenario(
                scenario_data,
                strict_mission=args.strict_mission,
                seed_override=args.seed,
                experiment_override=args.command)
            report = runner.run_scenario(scenario)
        _emit(report, args.out, args.format)
    except _VALIDATION_ERRORS as exc:
        print(f"q3sim: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Q3SimError as exc:
        print(f"q3sim: run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"q3sim: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    elapsed = time.perf_counter() - started
    print(f"q3sim: {args.command} finished in {elapsed:.2f} s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
