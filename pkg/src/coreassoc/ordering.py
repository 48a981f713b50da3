"""Linear orderings of 2-D locations that keep neighbours close.

Two orderings are offered:

``spiral``
    zone-stratified anti-diagonal boustrophedon over the (lat, lon)
    lattice: (1,1) -> (1,2) -> (2,1) -> (3,1) -> (2,2) -> (1,3) -> ...
``hilbert``
    the classical Hilbert curve on a ``2**bits`` square after rescaling
    coordinates; works for scattered (non-gridded) points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError, DuplicateCellError, StructuralError
from .ingest import GridMeta, StsMatrix

METHODS = ("spiral", "hilbert", "identity")


@dataclass(frozen=True)
class SpatialOrder:
    permutation: tuple
    method: str
    stratify_by_zone: bool = True

    def __post_init__(self):
        perm = tuple(int(i) for i in self.permutation)
        if sorted(perm) != list(range(len(perm))):
            raise StructuralError("permutation is not a bijection on 0..p-1")
        if self.method not in METHODS:
            raise DataError(f"unknown ordering method {self.method!r}")
        object.__setattr__(self, "permutation", perm)

    def __len__(self):
        return len(self.permutation)


def _infer_step(values: np.ndarray) -> float:
    u = np.unique(values)
    if u.size < 2:
        return 1.0
    return float(np.min(np.diff(u)))


def lattice_cells(grids: Sequence[GridMeta], step: tuple[float, float] | None = None) -> np.ndarray:
    """Integer (row, col) lattice cell of every grid; row follows latitude.

    The step defaults to the smallest positive spacing on each axis.
    Two grids falling in the same cell is an error.
    """
    lat = np.array([g.lat for g in grids], dtype=float)
    lon = np.array([g.lon for g in grids], dtype=float)
    if step is None:
        step = (_infer_step(lat), _infer_step(lon))
    rows = np.rint((lat - lat.min()) / step[0]).astype(np.int64)
    cols = np.rint((lon - lon.min()) / step[1]).astype(np.int64)
    cells = np.column_stack([rows, cols])
    seen = {}
    for i, cell in enumerate(map(tuple, cells)):
        if cell in seen:
            a, b = grids[seen[cell]].grid_id, grids[i].grid_id
            raise DuplicateCellError(f"grids {a!r} and {b!r} share lattice cell {cell}")
        seen[cell] = i
    return cells


def _spiral_rank(cells: np.ndarray) -> list[tuple]:
    # diagonal k = r + c; odd diagonals run with increasing row, even ones decreasing
    r = cells[:, 0] - cells[:, 0].min()
    c = cells[:, 1] - cells[:, 1].min()
    k = r + c
    return [(int(ki), int(ri) if ki % 2 else -int(ri)) for ki, ri in zip(k, r)]


def _strata(grids, stratify):
    if not stratify:
        return [np.arange(len(grids))]
    zones = np.array([g.zone for g in grids])
    return [np.flatnonzero(zones == z) for z in np.unique(zones)]


def spiral_order(grids: Sequence[GridMeta], stratify_by_zone: bool = True,
                 step: tuple[float, float] | None = None) -> SpatialOrder:
    cells = lattice_cells(grids, step)
    perm = []
    for members in _strata(grids, stratify_by_zone):
        keys = _spiral_rank(cells[members])
        perm.extend(members[sorted(range(len(members)), key=keys.__getitem__)])
    return SpatialOrder(tuple(perm), "spiral", stratify_by_zone)


def hilbert_index(x: int, y: int, bits: int) -> int:
    """Distance along the Hilbert curve of side ``2**bits`` for cell (x, y)."""
    n = 1 << bits
    d = 0
    s = n >> 1
    while s > 0:
        rx = 1 if x & s else 0
        ry = 1 if y & s else 0
        d += s * s * ((3 * rx) ^ ry)
        if ry == 0:
            if rx == 1:
                x = n - 1 - x
                y = n - 1 - y
            x, y = y, x
        s >>= 1
    return d


def hilbert_cells(grids: Sequence[GridMeta], order_bits: int) -> np.ndarray:
    if not 1 <= order_bits <= 31:
        raise DataError(f"order_bits must be in [1, 31], got {order_bits}")
    pts = np.array([[g.lat, g.lon] for g in grids], dtype=float)
    if not np.all(np.isfinite(pts)):
        raise DataError("non-finite coordinate")
    side = 1 << order_bits
    if len(grids) == 1:
        return np.zeros((1, 2), dtype=np.int64)
    lo = pts.min(axis=0)
    extent = float(np.max(pts.max(axis=0) - lo))
    if extent == 0.0:
        raise DataError("degenerate extent: all locations coincide")
    cells = np.floor((pts - lo) / extent * side).astype(np.int64)
    return np.clip(cells, 0, side - 1)


def hilbert_order(grids: Sequence[GridMeta], order_bits: int = 16,
                  stratify_by_zone: bool = True) -> SpatialOrder:
    """Sort grids by (zone, Hilbert index, grid_id).

    Both axes share one scale factor so the aspect ratio survives the
    rescaling; latitude maps to the curve's first coordinate.
    """
    cells = hilbert_cells(grids, order_bits)
    h = [hilbert_index(int(a), int(b), order_bits) for a, b in cells]
    key = [((g.zone if stratify_by_zone else 0), h[i], g.grid_id) for i, g in enumerate(grids)]
    perm = sorted(range(len(grids)), key=key.__getitem__)
    return SpatialOrder(tuple(perm), "hilbert", stratify_by_zone)


def identity_order(grids: Sequence[GridMeta]) -> SpatialOrder:
    return SpatialOrder(tuple(range(len(grids))), "identity", False)


def make_order(grids, method: str = "spiral", stratify_by_zone: bool = True,
               order_bits: int = 16) -> SpatialOrder:
    if method == "spiral":
        return spiral_order(grids, stratify_by_zone)
    if method == "hilbert":
        return hilbert_order(grids, order_bits, stratify_by_zone)
    if method == "identity":
        return identity_order(grids)
    raise DataError(f"unknown ordering method {method!r}")


def apply_order(x: StsMatrix, order: SpatialOrder) -> StsMatrix:
    if len(order) != x.p:
        raise StructuralError(f"order has {len(order)} entries, matrix has {x.p} columns")
    return x.take_columns(order.permutation).replace(label="D")


def order_table(grids: Sequence[GridMeta], order: SpatialOrder) -> pd.DataFrame:
    rows = [(rank, grids[i].grid_id, grids[i].lat, grids[i].lon, grids[i].zone)
            for rank, i in enumerate(order.permutation)]
    return pd.DataFrame(rows, columns=["rank", "grid_id", "lat", "lon", "zone"])
