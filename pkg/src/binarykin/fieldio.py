"""CSV field files: a ``key=value`` metadata row, a column header, one row per (x, v) node.

Floats are written with 17 significant digits so files round-trip exactly and
identical states give byte-identical files.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import ContractError
from .vgrid import DistributionPair, SpatialGrid, VelocityGrid

__all__ = ["format_float", "write_field", "read_field", "field_to_text", "write_table", "table_to_text"]


def format_float(x) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format_float(x)
    return str(x)


def table_to_text(header, rows, meta: dict | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if meta:
        w.writerow([f"{k}={_cell(v)}" for k, v in meta.items()])
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def write_table(path, header, rows, meta: dict | None = None) -> Path:
    p = Path(path)
    p.write_text(table_to_text(header, rows, meta), encoding="utf-8")
    return p


def field_to_text(f: DistributionPair, meta: dict | None = None) -> str:
    vg, xg = f.vgrid, f.xgrid
    info = {"v_radius": vg.radius, "v_points": vg.n, "x_dims": xg.dims, "x_points": xg.points_per_axis}
    info.update(meta or {})
    xcols = [f"x{d + 1}_index" for d in range(xg.dims)]
    xidx = np.stack(np.unravel_index(np.arange(xg.size), xg.shape), axis=1)
    rows = []
    for x in range(xg.size):
        for v in range(vg.size):
            rows.append([*xidx[x], *vg.nodes[v], f.data[0, x, v], f.data[1, x, v]])
    return table_to_text(xcols + ["vx", "vy", "vz", "fA", "fB"], rows, info)


def write_field(path, f: DistributionPair, meta: dict | None = None) -> Path:
    p = Path(path)
    p.write_text(field_to_text(f, meta), encoding="utf-8")
    return p


def _parse_meta(row: list[str]) -> dict:
    meta = {}
    for item in row:
        key, sep, val = item.partition("=")
        if not sep:
            raise ContractError(f"metadata entry {item!r} is not key=value")
        meta[key.strip()] = val.strip()
    return meta


def read_field(path) -> tuple[DistributionPair, dict]:
    """Read a field file; returns the state and its metadata (values as strings)."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"state file not found: {p}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2:
        raise ContractError(f"{p}: missing metadata or header row")
    meta = _parse_meta(rows[0])
    try:
        vg = VelocityGrid(float(meta["v_radius"]), int(meta["v_points"]))
        xg = SpatialGrid(int(meta["x_dims"]), int(meta["x_points"]))
    except KeyError as exc:
        raise ContractError(f"{p}: metadata lacks {exc.args[0]!r}") from None
    header = rows[1]
    expected = [f"x{d + 1}_index" for d in range(xg.dims)] + ["vx", "vy", "vz", "fA", "fB"]
    if header != expected:
        raise ContractError(f"{p}: expected columns {expected}, got {header}")
    body = rows[2:]
    if len(body) != xg.size * vg.size:
        raise ContractError(f"{p}: expected {xg.size * vg.size} data rows, got {len(body)}")
    arr = np.array(body, dtype=float)
    nd = xg.dims
    xflat = np.ravel_multi_index(tuple(arr[:, d].astype(int) for d in range(nd)), xg.shape)
    h = vg.spacing
    vidx = np.rint((arr[:, nd:nd + 3] + vg.radius) / h).astype(int)
    if np.any(vidx < 0) or np.any(vidx >= vg.n) or \
            np.max(np.abs(arr[:, nd:nd + 3] - (-vg.radius + h * vidx))) > 1e-9 * max(1.0, vg.radius):
        raise ContractError(f"{p}: velocity columns do not lie on the declared grid")
    vflat = np.ravel_multi_index(tuple(vidx.T), (vg.n,) * 3)
    data = np.full((2, xg.size, vg.size), np.nan)
    data[0, xflat, vflat] = arr[:, nd + 3]
    data[1, xflat, vflat] = arr[:, nd + 4]
    if np.isnan(data).any():
        raise ContractError(f"{p}: some grid nodes are missing or duplicated")
    return DistributionPair(vg, xg, data), meta
