"""Plain-text artifacts: CSV tables, key-value manifests, content hashes.

Floats are written with ``repr`` so that files round-trip exactly and
identical runs produce byte-identical output.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .grid import Field, Grid1D

__all__ = [
    "write_field_csv",
    "read_field_csv",
    "write_trajectory_csv",
    "write_energy_csv",
    "write_path_csv",
    "write_table_csv",
    "write_manifest",
    "read_manifest",
    "sha256_file",
    "content_hash",
    "write_gnuplot",
]


def _f(v) -> str:
    return repr(float(v))


def write_field_csv(u: Field, fname) -> Path:
    """Rows ``(component, node_index, re, im)``."""
    fname = Path(fname)
    with open(fname, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component", "node_index", "re", "im"])
        for c in range(u.components):
            for j, v in enumerate(u.values[c]):
                w.writerow([c, j, _f(v.real), _f(v.imag)])
    return fname


def read_field_csv(fname, grid: Grid1D) -> Field:
    rows = []
    with open(fname, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        for row in r:
            rows.append((int(row["component"]), int(row["node_index"]), float(row["re"]), float(row["im"])))
    comps = max(r[0] for r in rows) + 1
    vals = np.zeros((comps, grid.num_points), dtype=complex)
    for c, j, re, im in rows:
        vals[c, j] = re + 1j * im
    return Field(grid, vals)


def write_trajectory_csv(traj, fname, stride: int = 1) -> Path:
    """Rows ``(t, node, component, re, im)`` for every ``stride``-th record (and the last)."""
    fname = Path(fname)
    idx = list(range(0, len(traj.times), stride))
    if idx[-1] != len(traj.times) - 1:
        idx.append(len(traj.times) - 1)
    with open(fname, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "node", "component", "re", "im"])
        for i in idx:
            t = _f(traj.times[i])
            f = traj.fields[i]
            for c in range(f.shape[0]):
                for j in range(f.shape[1]):
                    w.writerow([t, j, c, _f(f[c, j].real), _f(f[c, j].imag)])
    return fname


def write_energy_csv(traj, fname) -> Path:
    """Rows ``(t, norm_s, quad_A, quad_L)`` from the trajectory's energy log."""
    log = traj.energy_log or {}
    cols = [k for k in ("norm_s", "quad_A", "quad_B", "quad_L") if k in log]
    fname = Path(fname)
    with open(fname, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + cols)
        for i, t in enumerate(traj.times):
            w.writerow([_f(t)] + [_f(log[k][i]) for k in cols])
    return fname


def write_path_csv(path, fname) -> Path:
    fname = Path(fname)
    with open(fname, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "w"])
        for t, v in zip(path.times, path.values):
            w.writerow([_f(t), _f(v)])
    return fname


def write_table_csv(header, rows, fname) -> Path:
    fname = Path(fname)
    with open(fname, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_f(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return fname


def _flatten(d, prefix=""):
    for k in sorted(d):
        v = d[k]
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


def write_manifest(entries: dict, fname) -> Path:
    """UTF-8 ``key = value`` lines, nested keys dotted, values JSON-encoded, sorted."""
    fname = Path(fname)
    with open(fname, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in _flatten(entries):
            fh.write(f"{k} = {json.dumps(v, sort_keys=True, default=_json_default)}\n")
    return fname


def read_manifest(fname) -> dict:
    out = {}
    with open(fname, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            k, _, v = line.partition(" = ")
            out[k] = json.loads(v)
    return out


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def sha256_file(fname) -> str:
    h = hashlib.sha256()
    with open(fname, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def content_hash(obj) -> str:
    """Hash of the canonical JSON encoding of ``obj``."""
    text = json.dumps(obj, sort_keys=True, default=_json_default, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_gnuplot(fname, csv_name: str, xcol: int, ycols, xlabel: str, ylabel: str,
                  logx: bool = False, logy: bool = False, title: str = "") -> Path:
    """Small gnuplot script plotting columns of a CSV file."""
    fname = Path(fname)
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if title:
        lines.append(f"set title '{title}'")
    if logx:
        lines.append("set logscale x")
    if logy:
        lines.append("set logscale y")
    plots = ", ".join(f"'{os.path.basename(csv_name)}' using {xcol}:{c} with linespoints" for c in ycols)
    lines.append(f"plot {plots}")
    fname.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return fname
