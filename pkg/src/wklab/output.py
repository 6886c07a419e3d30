"""Series CSV, summary JSON and plot emission for experiment reports."""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from . import plotting
from .virial import DiagnosticsRecord, series_columns


class OutputError(OSError):
    pass


def format_number(x) -> str:
    """Shortest decimal that round-trips the 64-bit value."""
    return repr(float(x))


def write_series_csv(path, records, r_list) -> None:
    columns = series_columns(r_list)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            row = rec.as_row()
            writer.writerow([format_number(row[c]) for c in columns])


def read_series_csv(path):
    """(header, rows) with every value parsed back to float."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [dict(zip(header, map(float, line))) for line in reader]
    return header, rows


def read_records(path, r_list) -> list:
    _, rows = read_series_csv(path)
    return [DiagnosticsRecord.from_row(row, r_list) for row in rows]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def summary_document(report) -> str:
    doc = {"experiment": report.name, "pass": report.passed, "summary": report.summary,
           "provenance": report.provenance}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def emit_outputs(report, out_dir, plots: bool = True) -> list:
    """Write series.csv, summary.json and (optionally) SVG plots; return the paths."""
    written = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "series.csv")
        write_series_csv(path, report.series, report.r_list)
        written.append(path)
        path = os.path.join(out_dir, "summary.json")
        with open(path, "w") as fh:
            fh.write(summary_document(report))
        written.append(path)
        if plots:
            for name, title, t, series, logy in report.figures:
                path = os.path.join(out_dir, name)
                plotting.plot_lines(path, t, series, title, logy)
                written.append(path)
    except OSError as exc:
        raise OutputError(f"cannot write {exc.filename or out_dir}: {exc.strerror or exc}") from exc
    return written
