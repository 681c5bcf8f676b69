"""Parse study CSV files and render log-log convergence figures."""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

EXPECTED_HEADER = ("level", "h", "tau", "samples", "error", "sem", "local_order")


class CsvFormatError(ValueError):
    """Raised for a malformed study CSV; carries the 1-based offending row."""

    def __init__(self, path, row, message):
        super().__init__(f"{path}: row {row}: {message}")
        self.path = str(path)
        self.row = row


@dataclass(frozen=True)
class StudyCurve:
    """One convergence curve: the parsed columns of a single study CSV."""

    label: str
    level: tuple
    h: tuple
    tau: tuple
    samples: tuple
    error: tuple
    sem: tuple
    local_order: tuple


def _parse_float(path, row, name, raw, minimum=None, strict=False):
    try:
        value = float(raw)
    except ValueError:
        raise CsvFormatError(path, row, f"field '{name}' is not a number: {raw!r}")
    if not np.isfinite(value):
        raise CsvFormatError(path, row, f"field '{name}' is not finite: {raw!r}")
    if minimum is not None:
        if strict and value <= minimum:
            raise CsvFormatError(path, row, f"field '{name}' must be > {minimum}: {raw!r}")
        if not strict and value < minimum:
            raise CsvFormatError(path, row, f"field '{name}' must be >= {minimum}: {raw!r}")
    return value


def _parse_int(path, row, name, raw, minimum):
    try:
        value = int(raw)
    except ValueError:
        raise CsvFormatError(path, row, f"field '{name}' is not an integer: {raw!r}")
    if value < minimum:
        raise CsvFormatError(path, row, f"field '{name}' must be >= {minimum}: {raw!r}")
    return value


def _sidecar_label(path):
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        try:
            meta = json.loads(sidecar.read_text())
        except (ValueError, OSError):
            return path.stem
        method = meta.get("method") if isinstance(meta, dict) else None
        if isinstance(method, str) and method:
            return method
    return path.stem


def read_study_csv(path):
    """Read one study CSV into a StudyCurve, validating schema and values.

    The label comes from a JSON sidecar's "method" field when one sits next
    to the CSV, else from the file stem.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(path, 1, "file is empty") from None
        if tuple(header) != EXPECTED_HEADER:
            raise CsvFormatError(
                path, 1, f"expected header {','.join(EXPECTED_HEADER)!r}, got {','.join(header)!r}")
        columns = {name: [] for name in EXPECTED_HEADER}
        for row_number, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(EXPECTED_HEADER):
                raise CsvFormatError(
                    path, row_number,
                    f"expected {len(EXPECTED_HEADER)} fields, got {len(fields)}")
            level, h, tau, samples, error, sem, local_order = fields
            columns["level"].append(_parse_int(path, row_number, "level", level, 1))
            columns["h"].append(_parse_float(path, row_number, "h", h, 0.0, strict=True))
            columns["tau"].append(_parse_float(path, row_number, "tau", tau, 0.0, strict=True))
            columns["samples"].append(_parse_int(path, row_number, "samples", samples, 1))
            columns["error"].append(_parse_float(path, row_number, "error", error, 0.0, strict=True))
            columns["sem"].append(_parse_float(path, row_number, "sem", sem, 0.0))
            if local_order == "":
                columns["local_order"].append(None)
            else:
                columns["local_order"].append(
                    _parse_float(path, row_number, "local_order", local_order))
    if not columns["level"]:
        raise CsvFormatError(path, 2, "no data rows")
    return StudyCurve(label=_sidecar_label(path),
                      **{name: tuple(vals) for name, vals in columns.items()})


def fit_slope(params, errors):
    """Least-squares slope of log(error) against log(param)."""
    return float(np.polyfit(np.log(np.asarray(params, dtype=float)),
                            np.log(np.asarray(errors, dtype=float)), 1)[0])


def _detect_axis(curves):
    for curve in curves:
        if len(set(curve.tau)) > 1:
            return "tau"
    for curve in curves:
        if len(set(curve.h)) > 1:
            return "h"
    return "tau"


def plot_convergence(csv_paths, expected_order=None, out="fig.svg"):
    """Render a log-log error plot from one or more study CSV files.

    One errorbar line per CSV, annotated with its least-squares slope when
    the file holds at least two levels. An optional dashed guide line of
    slope ``expected_order`` is anchored at the last data point of the
    first curve. Writes both SVG and PNG variants of ``out``.

    Returns {"slopes": {label: slope or None}, "axis": "tau"|"h",
    "outputs": [written paths]}.
    """
    curves = [read_study_csv(p) for p in csv_paths]
    axis = _detect_axis(curves)

    fig = Figure(figsize=(6.4, 4.8))
    ax = fig.add_subplot(111)
    slopes = {}
    for curve in curves:
        x = np.asarray(curve.tau if axis == "tau" else curve.h)
        y = np.asarray(curve.error)
        yerr = np.asarray(curve.sem)
        if len(x) >= 2:
            slope = fit_slope(x, y)
            label = f"{curve.label} (slope {slope:.2f})"
        else:
            slope = None
            label = curve.label
        slopes[curve.label] = slope
        ax.errorbar(x, y, yerr=yerr, marker="o", capsize=3, label=label)

    if expected_order is not None and curves:
        anchor_curve = curves[0]
        x0 = (anchor_curve.tau if axis == "tau" else anchor_curve.h)[-1]
        y0 = anchor_curve.error[-1]
        all_x = [v for c in curves for v in (c.tau if axis == "tau" else c.h)]
        span = np.array([min(all_x), max(all_x)], dtype=float)
        ax.plot(span, y0 * (span / x0) ** expected_order, "k--",
                label=f"slope {expected_order:g} guide")

    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(axis)
    ax.set_ylabel("strong error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()

    out = Path(out)
    if out.suffix == ".png":
        targets = [out, out.with_suffix(".svg")]
    else:
        targets = [out if out.suffix == ".svg" else out.with_suffix(".svg"),
                   out.with_suffix(".png")]
    outputs = []
    # keep SVG text as text so labels stay searchable
    with matplotlib.rc_context({"svg.fonttype": "none"}):
        for target in targets:
            fig.savefig(target, dpi=150, bbox_inches="tight")
            outputs.append(str(target))
    return {"slopes": slopes, "axis": axis, "outputs": outputs}
