"""Machine-readable reports: JSON records and CSV series.

Reports are plain dicts sanitized to JSON-safe values; with timings zeroed
(``--no-timing``) identical configurations produce byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import MissingSeries


def to_jsonable(obj):
    """Recursively convert report values to JSON-serializable types."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: to_jsonable(v) for k, v in dataclasses.asdict(obj).items()
                if not k.startswith("_")}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return repr(obj)


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating))
                             else v for v in row])
    return path


# series extractors: report dict -> (filename, header, rows)
def _series_conserve(report):
    rec = _find_record(report, "conserve")
    data = rec.get("series")
    if not data:
        raise MissingSeries("conserve record carries no series data")
    times, I, J = data["t"], data["I"], data["J"]
    rows = [(t, i, j, i * i + j * j) for t, i, j in zip(times, I, J)]
    return "conserve.csv", ["t", "I", "J", "I2_plus_J2"], rows


def _series_polar(report):
    rec = _find_record(report, "polar")
    data = rec.get("series")
    if not data:
        raise MissingSeries("polar record carries no series data")
    rows = []
    for k, t in enumerate(data["t"]):
        for j, th in enumerate(data["theta"]):
            x, y, z = data["points"][k][j]
            rows.append((th, t, x, y, z))
    return "polar.csv", ["theta", "t", "ex", "ey", "ez"], rows


def _series_grid(report):
    rec = _find_record(report, "invariants")
    data = rec.get("series")
    if not data:
        raise MissingSeries("invariants record carries no grid data")
    hdr = ["chart", "x1", "x2", "s", "I", "J", "K",
           "res_eq1", "res_eq2", "res_eq3"]
    rows = data["rows"]
    return "invariants_grid.csv", hdr, rows


_SERIES = {
    "conserve": _series_conserve,
    "polar": _series_polar,
    "grid": _series_grid,
}


def _find_record(report, name):
    for rec in report.get("checks", []):
        if rec.get("name") == name:
            return rec
    raise MissingSeries(f"no record named {name!r} in the report")


def emit_plot_data(report: dict, what: str, out_dir) -> Path:
    """Write one plot-ready CSV extracted from a suite report."""
    if what not in _SERIES:
        raise MissingSeries(
            f"unknown series {what!r}; available: {sorted(_SERIES)}")
    fname, header, rows = _SERIES[what](report)
    return write_csv(Path(out_dir) / fname, header, rows)
