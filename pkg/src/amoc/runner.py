"""CSV ingestion, test dispatch, traces and Table-style reports."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, inference, meanshift, trendshift
from .errors import (
    AmocError,
    DomainError,
    MissingColumn,
    NonMonotoneTime,
    ParseError,
)
from .series import TimeSeries, as_series, crop_range

TESTS = ("zmax", "cusum", "scusum", "lrt", "snht", "dmax", "hmax", "fmax", "jmax")
DEFAULT_DELTA = 0.05

MEANSHIFT_SUITE = (
    ("zmax", 0.01),
    ("zmax", 0.05),
    ("zmax", 0.10),
    ("cusum", 0.0),
    ("scusum", 0.0),
    ("lrt", None),
)
TRENDSHIFT_SUITE = (("jmax", DEFAULT_DELTA), ("fmax", DEFAULT_DELTA))
TRENDSHIFT_EXTENDED = (("dmax", DEFAULT_DELTA), ("hmax", 0.0))


@dataclass
class InputSpec:
    path: str | Path
    value_column: str | int = 0
    time_column: str | int | None = None
    delimiter: str = ","
    header: bool = True


def _parse_label(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _column_index(name: str | int, header: list[str] | None) -> int:
    if isinstance(name, int) or (header is None and str(name).isdigit()):
        return int(name)
    if header is None:
        raise MissingColumn(f"column {name!r} requested but the file has no header")
    try:
        return header.index(name)
    except ValueError:
        raise MissingColumn(f"no column {name!r}; have {header}") from None


def ingest(spec: InputSpec) -> TimeSeries:
    """Read one value column (and optional time column) from a delimited file.

    Blank lines and lines starting with ``#`` are ignored, which lets data
    snapshots carry provenance notes.
    """
    path = Path(spec.path)
    rows: list[tuple[int, list[str]]] = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=spec.delimiter), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            rows.append((lineno, [cell.strip() for cell in row]))
    header = None
    if spec.header:
        if not rows:
            raise ParseError("file is empty")
        header = rows.pop(0)[1]
    vcol = _column_index(spec.value_column, header)
    tcol = None if spec.time_column is None else _column_index(spec.time_column, header)

    values, labels = [], []
    for lineno, row in rows:
        try:
            cell = row[vcol]
        except IndexError:
            raise ParseError(f"missing value column {vcol}", lineno) from None
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(f"cannot parse {cell!r} as a number", lineno) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite value {cell!r}", lineno)
        values.append(v)
        if tcol is not None:
            try:
                label = _parse_label(row[tcol])
            except IndexError:
                raise ParseError(f"missing time column {tcol}", lineno) from None
            if labels and not label > labels[-1]:
                raise NonMonotoneTime(f"line {lineno}: time {label!r} does not increase")
            labels.append(label)
    if len(values) < 2:
        raise ParseError(f"need at least 2 observations, found {len(values)}")
    return TimeSeries(values, labels if tcol is not None else None, name=path.stem)


# -- test dispatch -------------------------------------------------------------


def _label_offset(series: TimeSeries) -> float | None:
    # Labels that are t plus a constant (e.g. consecutive years) allow
    # intercepts to be re-expressed on the label axis.
    if series.labels is None:
        return None
    labels = series.labels
    if not all(isinstance(v, (int, float)) for v in labels):
        return None
    offset = labels[0] - 1
    if all(math.isclose(labels[i] - (i + 1), offset) for i in range(len(labels))):
        return float(offset)
    return None


def _fit_entry(series: TimeSeries, fit) -> dict[str, float]:
    seg = fit.segments()
    offset = _label_offset(series)
    if offset is not None:
        seg["left_intercept_label_axis"] = seg["left_intercept"] - seg["left_slope"] * offset
        seg["right_intercept_label_axis"] = seg["right_intercept"] - seg["right_slope"] * offset
    return {k: float(v) for k, v in seg.items()}


def _dispatch(series: TimeSeries, test: str, delta: float | None, sigma_known: float | None):
    if test == "zmax":
        return meanshift.zmax_test(series, delta, sigma_known)
    if test == "cusum":
        return meanshift.cusum_max_test(series, sigma_known)
    if test == "scusum":
        return meanshift.scusum_test(series, sigma_known)
    if test == "lrt":
        return meanshift.lrt_test(series, delta or None)
    if test == "snht":
        return meanshift.snht_test(series)
    if test == "dmax":
        return trendshift.dmax_test(series, delta)
    if test == "hmax":
        return trendshift.hmax_test(series)
    if test == "fmax":
        return trendshift.fmax_test(series, delta)
    if test == "jmax":
        return trendshift.jmax_test(series, delta)
    raise ValueError(f"unknown test {test!r}; choose from {', '.join(TESTS)}")


def run_test(
    x,
    test: str,
    delta: float | None = DEFAULT_DELTA,
    sigma_known: float | None = None,
    tables=None,
    level: float = 0.95,
) -> dict[str, Any]:
    """Run one test and return a JSON-ready report entry.

    Errors from the data (degenerate variance, empty crop range, ...) are
    captured in the entry's ``diagnostic`` field rather than raised.
    """
    series = as_series(x)
    if test not in TESTS:
        raise ValueError(f"unknown test {test!r}; choose from {', '.join(TESTS)}")
    if test in ("cusum", "scusum", "snht", "hmax"):
        delta = 0.0
    entry: dict[str, Any] = {"test": test, "delta": delta, "n": series.n}
    if sigma_known is not None:
        entry["sigma_known"] = sigma_known
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            outcome = _dispatch(series, test, delta, sigma_known)
    except AmocError as exc:
        entry["diagnostic"] = {"error": type(exc).__name__, "message": str(exc)}
        return entry

    entry["statistic"] = outcome.statistic
    entry["tau_hat"] = outcome.tau_hat
    entry["tau_label"] = series.label(outcome.tau_hat)
    if outcome.excluded:
        entry["excluded"] = list(outcome.excluded)
    if caught:
        entry["warnings"] = [str(w.message) for w in caught]

    if test == "lrt":
        try:
            pv = inference.gumbel_pvalue(outcome.statistic, series.n)
        except DomainError as exc:
            entry["p_value"] = None
            entry["p_value_note"] = str(exc)
        else:
            entry["p_value"] = pv.as_dict()
            entry["reject"] = pv.lower < 1 - level
    elif test != "snht" and sigma_known is None:
        pv = inference.p_bound(outcome.statistic, test, delta or 0.0, tables)
        crit = inference.critical_value(test, delta or 0.0, level, tables)
        entry["p_value"] = pv.as_dict()
        entry["critical_value"] = crit
        entry["reject"] = outcome.statistic >= crit
    else:
        entry["p_value"] = None

    fit = getattr(outcome, "fit", None)
    if fit is not None:
        entry["fit"] = _fit_entry(series, fit)
    return entry


# -- traces --------------------------------------------------------------------


def trace(x, test: str, delta: float | None = DEFAULT_DELTA) -> tuple[np.ndarray, np.ndarray]:
    """Per-index statistic behind a test: ``(k, value)`` arrays."""
    series = as_series(x)
    n = series.n
    k_all = np.arange(1, n + 1)
    if test in ("cusum", "scusum"):
        return k_all, meanshift.cusum_process(series, standardize=True).values
    if test == "hmax":
        return k_all, trendshift.h_process(series)
    if test == "zmax":
        ks = crop_range(n, delta)
        return ks, meanshift.z_process(series)[ks - 1]
    if test == "lrt":
        ks = crop_range(n, delta or 0.0)
        return ks, meanshift.lrt_process(series)[ks - 1]
    if test == "snht":
        return k_all[:-1], meanshift.snht_process(series)
    if test == "dmax":
        ks = crop_range(n, delta)
        return ks, trendshift.d_process(series)[ks - 1]
    if test == "fmax":
        return trendshift.f_process(series, crop_range(n, delta, lo=2, hi=n - 2))
    if test == "jmax":
        return trendshift.j_process(series, crop_range(n, delta, lo=2, hi=n - 2))
    raise ValueError(f"unknown test {test!r}")


def emit_trace(x, test: str, delta: float | None, out: str | Path) -> Path:
    """Write ``k,label,statistic`` rows for external plotting."""
    series = as_series(x)
    ks, vals = trace(series, test, delta)
    out = Path(out)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "label", "statistic"])
        for k, v in zip(ks, vals):
            w.writerow([int(k), series.label(int(k)), "" if np.isnan(v) else repr(float(v))])
    return out


# -- reports -------------------------------------------------------------------


@dataclass
class Report:
    dataset: str
    n: int
    entries: list[dict[str, Any]] = field(default_factory=list)
    version: str = __version__
    quantile_source: dict[str, Any] = field(default_factory=lambda: {"kind": "embedded"})

    def to_json(self) -> str:
        return json.dumps(
            {
                "dataset": self.dataset,
                "n": self.n,
                "version": self.version,
                "quantile_source": self.quantile_source,
                "entries": self.entries,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Report":
        d = json.loads(text)
        return cls(d["dataset"], d["n"], d["entries"], d["version"], d["quantile_source"])

    def has_error(self, *names: str) -> bool:
        return any(e.get("diagnostic", {}).get("error") in names for e in self.entries)


def run_suite(x, suite: str, tables=None, quantile_source=None) -> Report:
    series = as_series(x)
    if suite == "meanshift":
        plan = MEANSHIFT_SUITE
    elif suite == "trendshift":
        plan = TRENDSHIFT_SUITE
    elif suite == "trendshift-extended":
        plan = TRENDSHIFT_SUITE + TRENDSHIFT_EXTENDED
    else:
        raise ValueError(f"unknown suite {suite!r}")
    report = Report(series.name or "series", series.n)
    if quantile_source:
        report.quantile_source = quantile_source
    for test, delta in plan:
        report.entries.append(run_test(series, test, delta, tables=tables))
    return report


_TITLES = {
    "zmax": "Zmax (delta = {delta:.2f})",
    "cusum": "max_k |CUSUM_k|",
    "scusum": "SCUSUM",
    "lrt": "LRT (l_max)",
    "snht": "SNHT",
    "dmax": "Dmax (delta = {delta:.2f})",
    "hmax": "Hmax",
    "fmax": "Fmax (delta = {delta:.2f})",
    "jmax": "Jmax (delta = {delta:.2f})",
}


def _title(entry: dict) -> str:
    return _TITLES[entry["test"]].format(delta=entry.get("delta") or 0.0)


def format_meanshift(report: Report) -> str:
    lines = [f"{'Test':<24}{'Statistic':>10}  {'Conclusion (95%)':<22}{'p-value bound'}"]
    for e in report.entries:
        if "diagnostic" in e:
            lines.append(f"{_title(e):<24}{'--':>10}  {e['diagnostic']['error']}")
            continue
        verdict = "Reject Homogeneity" if e.get("reject") else "Accept Homogeneity"
        pv = e["p_value"]["text"] if e.get("p_value") else "n/a"
        lines.append(f"{_title(e):<24}{e['statistic']:>10.3f}  {verdict:<22}{pv}")
    return "\n".join(lines)


def format_trendshift(report: Report) -> str:
    head = (
        f"{'Test':<20}{'tau':>8}{'Statistic':>11}{'95% q':>8}"
        f"{'L.Int':>10}{'L.Slope':>9}{'R.Int':>10}{'R.Slope':>9}  p-value bound"
    )
    lines = [head]
    for e in report.entries:
        if "diagnostic" in e:
            lines.append(f"{_title(e):<20}{'--':>8}  {e['diagnostic']['error']}")
            continue
        fit = e.get("fit", {})
        li = fit.get("left_intercept_label_axis", fit.get("left_intercept", math.nan))
        ri = fit.get("right_intercept_label_axis", fit.get("right_intercept", math.nan))
        lines.append(
            f"{_title(e):<20}{e['tau_label']!s:>8}{e['statistic']:>11.3f}"
            f"{e.get('critical_value', math.nan):>8.3f}"
            f"{li:>10.3f}{fit.get('left_slope', math.nan):>9.4f}"
            f"{ri:>10.3f}{fit.get('right_slope', math.nan):>9.4f}  "
            f"{e['p_value']['text'] if e.get('p_value') else 'n/a'}"
        )
    return "\n".join(lines)


# -- shipped snapshots ---------------------------------------------------------

SNAPSHOTS = {
    "soi": ("soi_annual.csv", "year", "soi"),
    "noaa": ("noaa_global_annual.csv", "year", "anomaly"),
}
DATA_DIR_ENV = "AMOC_DATA_DIR"


def snapshot_path(name: str) -> Path:
    """Location of a data snapshot; ``$AMOC_DATA_DIR`` overrides the packaged copy."""
    fname = SNAPSHOTS[name][0]
    dirs = [Path(d) for d in (os.environ.get(DATA_DIR_ENV),) if d]
    dirs.append(Path(__file__).with_name("data"))
    for d in dirs:
        if (d / fname).is_file():
            return d / fname
    raise FileNotFoundError(
        f"snapshot {fname!r} not found in {', '.join(map(str, dirs))}; "
        f"place the CSV there or set {DATA_DIR_ENV}"
    )


def load_snapshot(name: str) -> TimeSeries:
    fname, tcol, vcol = SNAPSHOTS[name]
    return ingest(InputSpec(snapshot_path(name), value_column=vcol, time_column=tcol))
