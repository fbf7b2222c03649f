"""DPGRID file format, version 1, plus the CSV alternative for n <= 2.

A DPGRID file is a single UTF-8 JSON header line
``{"magic":"DPGRID","version":1,"n":...,"dims":[...],"origin":[...],
"spacing":...,"components":...}`` terminated by one newline, followed by
``prod(dims) * components`` IEEE-754 float64 values, little-endian,
row-major over axes with the component index fastest.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import GridError, GridFunction

__all__ = ["write_dpgrid", "read_dpgrid", "write_csv", "read_csv", "load_grid"]

_MAGIC = "DPGRID"
_VERSION = 1


def write_dpgrid(path: str | Path, u: GridFunction) -> None:
    header = {
        "magic": _MAGIC,
        "version": _VERSION,
        "n": u.n,
        "dims": list(u.dims),
        "origin": [float(x) for x in u.origin],
        "spacing": u.spacing,
        "components": u.components,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_dpgrid(path: str | Path) -> GridFunction:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise GridError(f"{path}: malformed DPGRID header: {exc}") from exc
        if header.get("magic") != _MAGIC or header.get("version") != _VERSION:
            raise GridError(f"{path}: not a DPGRID v{_VERSION} file")
        n = int(header["n"])
        dims = tuple(int(d) for d in header["dims"])
        comps = int(header["components"])
        count = int(np.prod(dims)) * comps
        raw = fh.read(count * 8)
        if len(raw) != count * 8:
            raise GridError(f"{path}: expected {count} float64 values, file truncated")
        values = np.frombuffer(raw, dtype="<f8").astype(float).reshape(dims + (comps,))
    return GridFunction(
        n=n,
        dims=dims,
        origin=np.asarray(header["origin"], dtype=float),
        spacing=float(header["spacing"]),
        components=comps,
        values=values,
    )


def write_csv(path: str | Path, u: GridFunction) -> None:
    if u.n > 2:
        raise GridError("CSV form is only defined for n <= 2")
    centers = u.cell_centers().reshape(-1, u.n)
    vals = u.values.reshape(-1, u.components)
    cols = [f"x{i+1}" for i in range(u.n)] + [f"c{j}" for j in range(u.components)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for p, v in zip(centers, vals):
            row = [f"{x:.17g}" for x in p] + [f"{x:.17g}" for x in v]
            fh.write(",".join(row) + "\n")


def read_csv(path: str | Path) -> GridFunction:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        n = sum(1 for c in header if c.startswith("x"))
        comps = len(header) - n
        if n < 1 or n > 2 or comps < 1:
            raise GridError(f"{path}: unsupported CSV header {header}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    pts = data[:, :n]
    vals = data[:, n:]
    axes = [np.unique(pts[:, i]) for i in range(n)]
    dims = tuple(len(a) for a in axes)
    if int(np.prod(dims)) != pts.shape[0]:
        raise GridError(f"{path}: CSV rows do not form a full lattice")
    steps = [np.diff(a) for a in axes]
    h = float(steps[0][0]) if steps[0].size else 0.0
    for s in steps:
        if s.size and not np.allclose(s, h, rtol=1e-9):
            raise GridError(f"{path}: non-uniform spacing in CSV lattice")
    origin = np.array([a[0] - h / 2 for a in axes])
    order = np.lexsort(tuple(pts[:, i] for i in reversed(range(n))))
    values = vals[order].reshape(dims + (comps,))
    return GridFunction(n=n, dims=dims, origin=origin, spacing=h, components=comps, values=values)


def load_grid(path: str | Path) -> GridFunction:
    """Read a grid from DPGRID or CSV, dispatching on the file suffix."""
    p = Path(path)
    if p.suffix.lower() == ".csv":
        return read_csv(p)
    return read_dpgrid(p)
