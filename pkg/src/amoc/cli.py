"""Command line entry point: ``amoc {test,quantiles,trace,report}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__, inference, runner
from .errors import (
    AmocError,
    DegenerateSegment,
    DegenerateVariance,
    DomainError,
    EmptyCropRange,
    NumericalSingularity,
    ValidationFailure,
)
from .limits import LimitFamily, SimConfig, estimate_many

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_SIMULATION = 4

DEGENERATE = ("DegenerateVariance", "DegenerateSegment", "EmptyCropRange")
DEFAULT_CACHE = Path(os.environ.get("AMOC_CACHE", Path.home() / ".cache" / "amoc" / "quantiles.json"))


def _add_input(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="CSV file")
    src.add_argument("--snapshot", choices=sorted(runner.SNAPSHOTS), help="shipped data snapshot")
    p.add_argument("--value-column", default=None, help="value column name (or index without header)")
    p.add_argument("--time-column", default=None)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--no-header", action="store_true")


def _add_sim(p: argparse.ArgumentParser, required: bool) -> None:
    d = SimConfig()
    p.add_argument("--reps", type=int, required=required, default=d.replications)
    p.add_argument("--grid", type=int, required=required, default=d.grid)
    p.add_argument("--grid-j", type=int, default=d.grid_j)
    p.add_argument("--seed", type=int, required=required, default=d.seed)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cache", type=Path, default=DEFAULT_CACHE)
    p.add_argument("--no-cache", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="amoc", description=__doc__)
    ap.add_argument("--version", action="version", version=f"amoc {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run one changepoint test")
    _add_input(t)
    t.add_argument("--test", required=True, choices=runner.TESTS)
    t.add_argument("--delta", type=float, default=runner.DEFAULT_DELTA)
    t.add_argument("--sigma-known", type=float, default=None)
    t.add_argument("--json", type=Path, default=None, help="write the report JSON here")
    t.add_argument("--simulated-quantiles", action="store_true", help="use simulated instead of tabulated quantiles")
    _add_sim(t, required=False)

    q = sub.add_parser("quantiles", help="simulate null limit quantiles")
    q.add_argument("--family", required=True, help="test name (zmax, cusum, ...) or limit kind")
    q.add_argument("--delta", type=float, default=runner.DEFAULT_DELTA)
    _add_sim(q, required=False)

    tr = sub.add_parser("trace", help="write the per-index statistic as CSV")
    _add_input(tr)
    tr.add_argument("--test", required=True, choices=runner.TESTS)
    tr.add_argument("--delta", type=float, default=runner.DEFAULT_DELTA)
    tr.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("report", help="run a suite of tests and print a results table")
    _add_input(r)
    r.add_argument("--suite", required=True, choices=("meanshift", "trendshift", "trendshift-extended"))
    r.add_argument("--json", type=Path, default=None)
    r.add_argument("--simulated-quantiles", action="store_true")
    _add_sim(r, required=False)
    return ap


def _series(args):
    if args.snapshot:
        return runner.load_snapshot(args.snapshot)
    header = not args.no_header
    vcol = args.value_column
    if vcol is None:
        if header:
            raise DomainError("--value-column is required for files with a header")
        vcol = 0
    elif not header:
        vcol = int(vcol)
    spec = runner.InputSpec(args.input, vcol, args.time_column, args.delimiter, header)
    return runner.ingest(spec)


def _config(args) -> SimConfig:
    return SimConfig(
        replications=args.reps, grid=args.grid, seed=args.seed, workers=args.workers, grid_j=args.grid_j
    )


def _family(name: str, delta: float) -> LimitFamily:
    try:
        return LimitFamily.for_test(name, delta)
    except AmocError:
        return LimitFamily(name, delta)


def _simulated_tables(args, tests):
    cfg = _config(args)
    fams = {}
    for test, delta in tests:
        if test in ("lrt", "snht"):
            continue
        fams[inference.table_key(test, delta or 0.0)] = LimitFamily.for_test(test, delta or 0.0)
    est = estimate_many(fams.values(), cfg, cache=None if args.no_cache else args.cache)
    tables = {key: est[f] for key, f in fams.items()}
    source = {"kind": "simulated", "config": {k: v for k, v in vars(cfg).items() if k != "workers"}}
    return tables, source


def _write_report(report: runner.Report, path: Path | None) -> None:
    if path is not None:
        path.write_text(report.to_json() + "\n")


def cmd_test(args) -> int:
    series = _series(args)
    tables, source = None, None
    if args.simulated_quantiles:
        tables, source = _simulated_tables(args, [(args.test, args.delta)])
    entry = runner.run_test(series, args.test, args.delta, args.sigma_known, tables)
    report = runner.Report(series.name or "series", series.n, [entry])
    if source:
        report.quantile_source = source
    _write_report(report, args.json)
    print(report.to_json())
    return EXIT_DEGENERATE if report.has_error(*DEGENERATE) else EXIT_OK


def cmd_quantiles(args) -> int:
    if not args.no_cache:
        args.cache.parent.mkdir(parents=True, exist_ok=True)
    fam = _family(args.family, args.delta)
    table = estimate_many([fam], _config(args), cache=None if args.no_cache else args.cache)[fam]
    print(f"{fam}  R={table.config.replications} m={table.config.grid} seed={table.config.seed}")
    for p, q in zip(table.probs, table.quantiles):
        print(f"{p:>6.3f}  {q:.3f}")
    return EXIT_OK


def cmd_trace(args) -> int:
    series = _series(args)
    runner.emit_trace(series, args.test, args.delta, args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    series = _series(args)
    plan = {
        "meanshift": runner.MEANSHIFT_SUITE,
        "trendshift": runner.TRENDSHIFT_SUITE,
        "trendshift-extended": runner.TRENDSHIFT_SUITE + runner.TRENDSHIFT_EXTENDED,
    }[args.suite]
    tables, source = None, None
    if args.simulated_quantiles:
        tables, source = _simulated_tables(args, plan)
    report = runner.run_suite(series, args.suite, tables, source)
    _write_report(report, args.json)
    fmt = runner.format_meanshift if args.suite == "meanshift" else runner.format_trendshift
    print(f"{report.dataset} (n = {report.n})")
    print(fmt(report))
    return EXIT_DEGENERATE if report.has_error(*DEGENERATE) else EXIT_OK


COMMANDS = {"test": cmd_test, "quantiles": cmd_quantiles, "trace": cmd_trace, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DegenerateVariance, DegenerateSegment, EmptyCropRange) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (NumericalSingularity, ValidationFailure) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except (AmocError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
