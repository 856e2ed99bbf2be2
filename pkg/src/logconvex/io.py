"""File formats: CSV tables, flat little-endian float64 payloads with JSON headers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .frac_ou import FourierGrid, GridState
from .spectral import Trajectory

SCHEMA_VERSION = "1.0"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_payload(prefix: Path, array: np.ndarray, header: dict):
    prefix.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(array, dtype="<f8").tofile(prefix.with_suffix(".bin"))
    write_json(prefix.with_suffix(".json"), header)


def write_trajectory(traj: Trajectory, prefix) -> dict:
    """``prefix.csv`` with ``(t, norm)``, ``prefix.bin`` coefficients, ``prefix.json`` header."""
    prefix = Path(prefix)
    write_csv(prefix.with_suffix(".csv"), ["t", "norm"], zip(traj.times, traj.norms))
    header = {
        "format": "logconvex.trajectory",
        "schema_version": SCHEMA_VERSION,
        "dtype": "<f8",
        "order": "C",
        "dims": list(traj.states.shape),
        "times": traj.times.tolist(),
        "T": traj.T,
    }
    if traj.weights is not None:
        header["weights"] = np.broadcast_to(traj.weights, traj.states.shape[1:]).tolist()
    _write_payload(prefix, traj.states, header)
    return header


def read_trajectory(prefix) -> Trajectory:
    prefix = Path(prefix)
    header = json.loads(prefix.with_suffix(".json").read_text())
    data = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8").reshape(header["dims"])
    w = np.asarray(header["weights"]) if "weights" in header else None
    norms = np.sqrt(np.sum((1.0 if w is None else w) * data**2, axis=1))
    return Trajectory(np.asarray(header["times"]), data, norms, float(header["T"]), w)


def write_grid_state(state: GridState, prefix) -> dict:
    prefix = Path(prefix)
    header = {
        "format": "logconvex.gridstate",
        "schema_version": SCHEMA_VERSION,
        "dtype": "<f8",
        "order": "C",
        "dims": list(state.values.shape),
        "extent": list(state.grid.extent),
        "points": list(state.grid.points),
    }
    if "t" in state.meta:
        header["t"] = state.meta["t"]
    _write_payload(prefix, state.values, header)
    return header


def read_grid_state(prefix) -> GridState:
    prefix = Path(prefix)
    header = json.loads(prefix.with_suffix(".json").read_text())
    grid = FourierGrid(tuple(header["extent"]), tuple(header["points"]))
    vals = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8").reshape(header["dims"])
    meta = {"t": header["t"]} if "t" in header else {}
    return GridState(vals, grid, meta)


def write_report(report, prefix) -> None:
    """Convexity report as ``prefix.json`` plus the ratio curve ``prefix.csv``."""
    prefix = Path(prefix)
    write_json(prefix.with_suffix(".json"), {"schema_version": SCHEMA_VERSION, **report.to_dict()})
    write_csv(prefix.with_suffix(".csv"), ["t", "ratio"], zip(report.times, report.ratios))


def write_weight_table(table, path) -> Path:
    return write_csv(path, ["t", "w", "lower_bound"], zip(table.ts, table.ws, table.lower))
