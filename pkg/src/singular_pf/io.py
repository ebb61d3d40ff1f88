"""Output formats: field snapshots, CSV tables, JSON reports and the run manifest.

A field snapshot is a pair ``name.bin`` (little-endian float64, C order) and
``name.json`` (grid metadata, unit tag, dtype, shape).  Nothing written here
carries a timestamp, so reruns with the same config and seed are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import platform
from importlib import metadata
from pathlib import Path

import numpy as np

from .grid import Field, Grid

FLOAT_FMT = "{:.17g}"


def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    return str(v)


def write_csv(path, rows, columns=None):
    """Write a list of row dicts (or ``(columns, list-of-lists)``) as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
        rows = [[r.get(c, "") for c in columns] for r in rows]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def read_csv(path):
    """Read a CSV written by :func:`write_csv`; numeric cells become floats."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except (TypeError, ValueError):
                    parsed[k] = v
            out.append(parsed)
    return out


def write_field(path_stem, grid: Grid, values, unit="generic", extra=None):
    """Snapshot ``values`` as ``<stem>.bin`` plus a ``<stem>.json`` header."""
    field = Field(grid, np.asarray(values, dtype=float).ravel(), unit)
    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".bin").write_bytes(field.values.astype("<f8").tobytes())
    header = {"grid": grid.to_json(), "unit": unit, "dtype": "<f8", "shape": list(grid.shape), "order": "C"}
    if extra:
        header.update(extra)
    write_json(stem.with_suffix(".json"), header)
    return stem


def read_field(path_stem) -> Field:
    stem = Path(path_stem)
    header = read_json(stem.with_suffix(".json"))
    grid = Grid(tuple(header["grid"]["n"]), tuple(header["grid"]["extent"]))
    values = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype=header["dtype"]).astype(float)
    return Field(grid, values, header["unit"])


def versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "matplotlib", "pyyaml"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def manifest(command, cfg=None, seed=None, outputs=(), extra=None) -> dict:
    """Run manifest.  Schema:

    ``command`` (str), ``config_hash`` (sha256 of the merged config or null),
    ``config`` (merged config mapping or null), ``seed`` (int), ``versions``
    (package -> version), ``outputs`` (sorted relative paths), plus any
    command-specific ``extra`` keys.
    """
    m = {
        "command": command,
        "config_hash": cfg.hash() if cfg is not None else None,
        "config": cfg.data if cfg is not None else None,
        "seed": seed,
        "versions": versions(),
        "outputs": sorted(str(o) for o in outputs),
    }
    if extra:
        m.update(extra)
    return m
