"""Bergsma's correlation, spatial weight matrices, the Spatial Bergsma
statistic and Moran's I.

Bergsma's covariance is estimated by the plug-in V-statistic

    kappa(x, y) = t**-2 * sum_ij hx[i, j] * hy[i, j]

where ``hx`` is the empirically centred distance kernel

    hx[i, j] = -|x_i - x_j| / 2 + mean_k |x_i - x_k| / 2
               + mean_k |x_j - x_k| / 2 - mean_kl |x_k - x_l| / 2,

and the correlation is ``kappa(x, y) / sqrt(kappa(x, x) * kappa(y, y))``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, InsufficientDataError, StructuralError, ZeroVarianceError
from .ingest import GridMeta, StsMatrix
from .linalg import AssociationMatrix
from .ordering import lattice_cells

MIN_POINTS = 4
BLOCK_BYTES = 64 * 2 ** 20


def centered_kernel(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    a = np.abs(x[:, None] - x[None, :])
    row = a.mean(axis=1)
    return -0.5 * (a - row[:, None] - row[None, :] + row.mean())


def _check_series(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise StructuralError(f"{name} must be one-dimensional")
    if x.size < MIN_POINTS:
        raise InsufficientDataError(f"need at least {MIN_POINTS} points, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{name} has non-finite values")
    if np.ptp(x) == 0:
        raise ZeroVarianceError(f"{name} is constant")
    return x


def bergsma_cov(x, y) -> float:
    hx, hy = centered_kernel(x), centered_kernel(y)
    return float(np.mean(hx * hy))


def bergsma_rho(x, y) -> float:
    x, y = _check_series(x, "x"), _check_series(y, "y")
    if x.size != y.size:
        raise StructuralError(f"length mismatch: {x.size} vs {y.size}")
    hx, hy = centered_kernel(x), centered_kernel(y)
    kxy = np.mean(hx * hy)
    kxx = np.mean(hx * hx)
    kyy = np.mean(hy * hy)
    return float(kxy / math.sqrt(kxx * kyy))


def _mean_abs_dev(col: np.ndarray) -> np.ndarray:
    """``mean_k |col_i - col_k|`` for every i, via sorting."""
    t = col.size
    order = np.argsort(col, kind="stable")
    s = col[order]
    csum = np.concatenate([[0.0], np.cumsum(s)])
    k = np.arange(t)
    below = s * k - csum[:-1]
    above = (csum[-1] - csum[1:]) - s * (t - k - 1)
    out = np.empty(t)
    out[order] = (below + above) / t
    return out


def _block_gram(x, rowmean, grand, rows):
    xi = x[rows]                                        # (b, p)
    a = np.abs(xi.T[:, :, None] - x.T[:, None, :])      # (p, b, t)
    a -= rowmean.T[:, rows, None]
    a -= rowmean.T[:, None, :]
    a += grand[:, None, None]
    flat = a.reshape(a.shape[0], -1)
    return flat @ flat.T


def bergsma_matrix(x: StsMatrix, jobs: int = 1, block_bytes: int = BLOCK_BYTES) -> AssociationMatrix:
    """All pairwise Bergsma correlations of the columns of a complete matrix.

    Centred kernels are never stored whole: they are rebuilt in row
    blocks from per-column row means, and block Gram matrices are summed
    in a fixed order, so the result does not depend on ``jobs``.
    """
    vals = x.filled()
    t, p = vals.shape
    if t < MIN_POINTS:
        raise InsufficientDataError(f"window {x.time_index[:1]} has {t} points, need {MIN_POINTS}")
    const = np.ptp(vals, axis=0) == 0
    if const.any():
        raise ZeroVarianceError(f"column {x.columns[int(np.argmax(const))].grid_id} is constant")
    rowmean = np.column_stack([_mean_abs_dev(vals[:, j]) for j in range(p)])
    grand = rowmean.mean(axis=0)
    b = max(1, min(t, block_bytes // (8 * p * t)))
    blocks = [np.arange(i, min(i + b, t)) for i in range(0, t, b)]
    if jobs > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(lambda r: _block_gram(vals, rowmean, grand, r), blocks))
    else:
        parts = [_block_gram(vals, rowmean, grand, r) for r in blocks]
    g = np.zeros((p, p))
    for part in parts:
        g += part
    g = 0.5 * (g + g.T)
    d = np.sqrt(np.diag(g))
    m = g / np.outer(d, d)
    np.clip(m, -1.0, 1.0, out=m)
    np.fill_diagonal(m, 1.0)
    return AssociationMatrix(m, "bergsma", grid_ids=tuple(x.grid_ids))


def bergsma_matrix_naive(x: StsMatrix) -> AssociationMatrix:
    vals = x.filled()
    p = vals.shape[1]
    m = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            try:
                m[i, j] = m[j, i] = bergsma_rho(vals[:, i], vals[:, j])
            except (ZeroVarianceError, InsufficientDataError) as exc:
                raise type(exc)(f"pair ({x.columns[i].grid_id}, {x.columns[j].grid_id}): {exc}") from None
    return AssociationMatrix(m, "bergsma", grid_ids=tuple(x.grid_ids))


# -- spatial weights ---------------------------------------------------------

@dataclass
class WeightMatrix:
    w: np.ndarray
    scheme: str
    row_standardized: bool
    params: dict = field(default_factory=dict)
    isolated: tuple = ()

    @property
    def p(self) -> int:
        return self.w.shape[0]


def _standardize(w: np.ndarray) -> np.ndarray:
    rs = w.sum(axis=1, keepdims=True)
    return np.divide(w, rs, out=np.zeros_like(w), where=rs > 0)


def weights_lag1(grids: Sequence[GridMeta], rule: str = "rook", row_standardize: bool = True,
                 step: tuple[float, float] | None = None) -> WeightMatrix:
    """Binary lattice adjacency (rook: 4 neighbours, queen: 8)."""
    if rule not in ("rook", "queen"):
        raise DataError(f"unknown adjacency rule {rule!r}")
    cells = lattice_cells(grids, step)
    dr = np.abs(cells[:, None, 0] - cells[None, :, 0])
    dc = np.abs(cells[:, None, 1] - cells[None, :, 1])
    if rule == "rook":
        adj = (dr + dc) == 1
    else:
        adj = (np.maximum(dr, dc) == 1)
    w = adj.astype(float)
    isolated = tuple(int(i) for i in np.flatnonzero(w.sum(axis=1) == 0))
    if row_standardize:
        w = _standardize(w)
    return WeightMatrix(w, "lag1_adjacency", row_standardize, {"rule": rule}, isolated)


def weights_expdecay(grids: Sequence[GridMeta], theta: float = 1.0,
                     row_standardize: bool = True) -> WeightMatrix:
    if not theta > 0:
        raise DataError(f"theta must be positive, got {theta}")
    pts = np.array([[g.lat, g.lon] for g in grids], dtype=float)
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
    off = ~np.eye(len(grids), dtype=bool)
    if np.any(d[off] == 0):
        i, j = np.argwhere((d == 0) & off)[0]
        raise DataError(f"grids {grids[i].grid_id!r} and {grids[j].grid_id!r} coincide")
    w = np.where(off, np.exp(-d / theta), 0.0)
    isolated = tuple(int(i) for i in np.flatnonzero(w.sum(axis=1) == 0))
    if row_standardize:
        w = _standardize(w)
    return WeightMatrix(w, "exp_decay", row_standardize, {"theta": theta}, isolated)


def make_weights(grids, scheme: str, rule: str = "rook", theta: float = 1.0) -> WeightMatrix:
    if scheme in ("lag1", "lag1_adjacency"):
        return weights_lag1(grids, rule)
    if scheme in ("expdecay", "exp_decay"):
        return weights_expdecay(grids, theta)
    raise DataError(f"unknown weight scheme {scheme!r}")


# -- global statistics -------------------------------------------------------

def spatial_bergsma(assoc: AssociationMatrix, w: WeightMatrix) -> float:
    """``p**-1 * sum_{i<j} (w_ij + w_ji) * rho_ij`` for either estimator."""
    m = np.asarray(assoc.m, dtype=float)
    ww = np.asarray(w.w, dtype=float)
    if m.shape != ww.shape or m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise StructuralError(f"association {m.shape} and weights {ww.shape} do not match")
    p = m.shape[0]
    iu = np.triu_indices(p, 1)
    return float(np.sum((ww + ww.T)[iu] * m[iu]) / p)


def morans_i(values, w: WeightMatrix) -> float:
    v = np.asarray(values, dtype=float)
    ww = np.asarray(w.w, dtype=float)
    if ww.shape != (v.size, v.size):
        raise StructuralError(f"weights {ww.shape} do not match {v.size} values")
    z = v - v.mean()
    ss = z @ z
    if ss == 0:
        raise ZeroVarianceError("values are constant")
    s0 = ww.sum()
    if s0 == 0:
        raise DataError("weight matrix is empty")
    return float(v.size / s0 * (z @ ww @ z) / ss)
