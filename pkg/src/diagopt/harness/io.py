"""CSV emission and parsing for traces, summaries and rate tables."""

from __future__ import annotations

import csv
from pathlib import Path

from ..rates import write_rate_reports
from ..solvers import Trace, TraceRecord

__all__ = ["TRACE_COLUMNS", "format_value", "write_trace", "read_trace", "emit_traces",
           "emit_rates", "write_rows"]

TRACE_COLUMNS = ("k", "grad_evals", "rel_err", "obj_gap", "wall_ns")


def format_value(v) -> str:
    """Integers verbatim, floats with 17 significant digits (round-trips exactly)."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _write(path: Path, header, rows):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_trace(trace, path) -> Path:
    records = trace.records if isinstance(trace, Trace) else trace
    rows = ((r.k, int(r.grad_evals), float(r.rel_err), float(r.obj_gap), int(r.wall_ns))
            for r in records)
    return _write(Path(path), TRACE_COLUMNS, rows)


def read_trace(path) -> list:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != TRACE_COLUMNS:
                raise ValueError(f"{path}: unexpected trace header {header}")
            return [TraceRecord(int(k), int(g), float(r), float(o), int(w))
                    for k, g, r, o, w in reader]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


def emit_traces(traces: dict, directory) -> list:
    """Write ``{name: trace}`` as ``<directory>/trace_<name>.csv``."""
    directory = Path(directory)
    return [write_trace(t, directory / f"trace_{name}.csv") for name, t in traces.items()]


def emit_rates(reports, directory, name="rates.csv") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return write_rate_reports(list(reports), directory / name)


def write_rows(rows: list, path, columns=None) -> Path:
    """Write a list of dicts as CSV with the given (or first-row) column order."""
    if columns is None:
        columns = list(rows[0]) if rows else []
    return _write(Path(path), columns, ([row.get(c) for c in columns] for row in rows))
