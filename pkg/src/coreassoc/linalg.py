"""Dense kernels: SVD, symmetric eigendecomposition, GSVD, ACF,
classical detrending and Pearson correlation matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (InsufficientDataError, NumericError, RankDeficiencyError,
                     StructuralError, ZeroVarianceError)
from .ingest import StsMatrix

SYMMETRY_TOL = 1e-10


@dataclass
class SvdFactors:
    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def reconstruct(self, rank: int | None = None) -> np.ndarray:
        k = len(self.singular_values) if rank is None else rank
        return (self.left_vectors[:, :k] * self.singular_values[:k]) @ self.right_vectors[:, :k].T


@dataclass
class EigenFactors:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass
class GsvdFactors:
    """``a = left_a @ diag(c) @ X.T`` and ``b = left_b @ diag(s) @ X.T``.

    Pairs are sorted by decreasing generalized value ``c / s``.
    """

    generalized_values: np.ndarray
    c: np.ndarray
    s: np.ndarray
    shared_right_factor: np.ndarray
    left_a: np.ndarray
    left_b: np.ndarray


@dataclass
class AssociationMatrix:
    m: np.ndarray
    method: str
    window: str = "whole"
    region: str = "all"
    grid_ids: tuple = ()
    note: str = ""

    @property
    def p(self) -> int:
        return self.m.shape[0]


def _finite(x, what="matrix") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{what} contains non-finite entries")
    return x


def svd(x) -> SvdFactors:
    x = _finite(x)
    u, sv, vt = np.linalg.svd(x, full_matrices=False)
    return SvdFactors(sv, u, vt.T)


def eig_sym(r) -> EigenFactors:
    r = _finite(r)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {r.shape}")
    scale = max(1.0, float(np.max(np.abs(r)))) if r.size else 1.0
    if np.max(np.abs(r - r.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise NumericError("matrix is not symmetric")
    w, v = np.linalg.eigh(r)
    return EigenFactors(w[::-1].copy(), v[:, ::-1].copy())


def gsvd(a, b) -> GsvdFactors:
    """Generalized SVD of a tall pair sharing their column space.

    Computed by QR of the stacked matrix followed by a CS decomposition
    of the orthonormal factor.  Requires ``[a; b]`` of full column rank.
    """
    a, b = _finite(a, "a"), _finite(b, "b")
    n1, p = a.shape
    n2, pb = b.shape
    if p != pb:
        raise StructuralError(f"column counts differ: {p} vs {pb}")
    if p > n1 or p > n2:
        raise StructuralError("gsvd needs p <= rows of both matrices")
    q, r = np.linalg.qr(np.vstack([a, b]))
    rdiag = np.abs(np.diag(r))
    if rdiag.min(initial=np.inf) <= max(n1 + n2, p) * np.finfo(float).eps * rdiag.max(initial=0.0):
        raise RankDeficiencyError("stacked matrix [a; b] is rank deficient")
    q1, q2 = q[:n1], q[n1:]
    ua, c, zt = np.linalg.svd(q1, full_matrices=False)
    z = zt.T
    c = np.clip(c, 0.0, 1.0)
    w = q2 @ z
    s = np.linalg.norm(w, axis=0)
    # keep the smaller of (c, s) as computed; derive the larger from c^2 + s^2 = 1
    s = np.where(c > s, s, np.sqrt(np.clip(1.0 - c ** 2, 0.0, 1.0)))
    c = np.where(c > s, np.sqrt(np.clip(1.0 - s ** 2, 0.0, 1.0)), c)
    tiny = 10 * max(n1 + n2, p) * np.finfo(float).eps
    s = np.where(s < tiny, 0.0, s)
    c = np.where(s == 0.0, 1.0, np.where(c < tiny, 0.0, c))
    s = np.where(c == 0.0, 1.0, s)
    ub = np.zeros((n2, p))
    ok = s > np.sqrt(np.finfo(float).eps)
    ub[:, ok] = w[:, ok] / s[ok]
    if not ok.all():
        ub = _complete_orthonormal(ub, ok)
    with np.errstate(divide="ignore"):
        gamma = np.where(s > 0, c / np.where(s > 0, s, 1.0), np.inf)
    order = np.argsort(-gamma, kind="stable")
    x = r.T @ z
    return GsvdFactors(gamma[order], c[order], s[order], x[:, order], ua[:, order], ub[:, order])


def _complete_orthonormal(u: np.ndarray, filled: np.ndarray) -> np.ndarray:
    basis = u[:, filled]
    need = int((~filled).sum())
    rng = np.random.default_rng(0)
    extra = rng.standard_normal((u.shape[0], need))
    extra -= basis @ (basis.T @ extra)
    qx, _ = np.linalg.qr(extra)
    qx -= basis @ (basis.T @ qx)
    qx, _ = np.linalg.qr(qx)
    out = u.copy()
    out[:, ~filled] = qx
    return out


def acf_matrix(x, max_lag: int) -> np.ndarray:
    """Biased sample ACF of every column, lags 1..max_lag, shape ``(max_lag, p)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if max_lag < 1 or n < max_lag + 2:
        raise InsufficientDataError(f"need at least max_lag + 2 = {max_lag + 2} points, got {n}")
    xc = x - x.mean(axis=0)
    denom = np.einsum("ij,ij->j", xc, xc)
    if np.any(denom <= 0):
        raise ZeroVarianceError(f"constant series in column {int(np.argmax(denom <= 0))}")
    out = np.empty((max_lag, x.shape[1]))
    for k in range(1, max_lag + 1):
        out[k - 1] = np.einsum("ij,ij->j", xc[:-k], xc[k:]) / denom
    return out


def acf(series, max_lag: int) -> np.ndarray:
    return acf_matrix(np.asarray(series, dtype=float), max_lag)[:, 0]


def season_codes(time_index: np.ndarray) -> np.ndarray | None:
    """Day-of-year (1..365, Feb 29 pooled with day 59) or month-of-year codes.

    Yearly data has no season; returns None.
    """
    unit = np.datetime_data(time_index.dtype)[0]
    if unit == "D":
        years = time_index.astype("datetime64[Y]")
        doy = (time_index - years.astype("datetime64[D]")).astype(int) + 1
        y = years.astype(int) + 1970
        leap = (y % 4 == 0) & ((y % 100 != 0) | (y % 400 == 0))
        return np.where(leap & (doy >= 60), doy - 1, doy)
    if unit == "M":
        return time_index.astype(int) % 12 + 1
    if unit == "Y":
        return None
    raise StructuralError(f"unsupported time resolution {unit!r}")


def classical_detrend(x: StsMatrix) -> StsMatrix:
    """Remove a linear time trend and per-season means from every column.

    Trend and seasonal means are fitted jointly by least squares
    (trend on the season-demeaned clock), so a pure ramp and a pure
    seasonal cycle are both removed exactly.  Masked cells stay masked.
    """
    t = x.time_index.astype(np.int64).astype(float)
    season = season_codes(x.time_index)
    out = np.full(x.shape, np.nan)
    for j in range(x.p):
        obs = ~x.mask[:, j]
        y = x.values[obs, j]
        tj = t[obs]
        if y.size < 3 or np.ptp(y) == 0:
            raise ZeroVarianceError(f"column {x.columns[j].grid_id} is constant or too short")
        if season is None:
            yt, tt = y - y.mean(), tj - tj.mean()
        else:
            codes = season[obs]
            yt = y - _group_means(y, codes)
            tt = tj - _group_means(tj, codes)
        ss = tt @ tt
        beta = (tt @ yt) / ss if ss > 0 else 0.0
        out[obs, j] = yt - beta * tt
    return x.replace(values=out, mask=x.mask.copy(), label="T")


def _group_means(v: np.ndarray, codes: np.ndarray) -> np.ndarray:
    _, inv = np.unique(codes, return_inverse=True)
    sums = np.bincount(inv, weights=v)
    counts = np.bincount(inv)
    return (sums / counts)[inv]


def pearson_matrix(x: StsMatrix, min_overlap: int = 3) -> AssociationMatrix:
    """Pearson correlations; masked data use pairwise-complete rows."""
    vals = x.values
    if not x.mask.any():
        xc = vals - vals.mean(axis=0)
        ss = np.einsum("ij,ij->j", xc, xc)
        if np.any(ss <= 0):
            raise ZeroVarianceError(f"column {x.columns[int(np.argmax(ss <= 0))].grid_id} is constant")
        if x.n < min_overlap:
            raise InsufficientDataError(f"only {x.n} rows, need {min_overlap}")
        z = xc / np.sqrt(ss)
        r = z.T @ z
    else:
        r = _pairwise_pearson(vals, ~x.mask, x, min_overlap)
    r = 0.5 * (r + r.T)
    np.clip(r, -1.0, 1.0, out=r)
    np.fill_diagonal(r, 1.0)
    return AssociationMatrix(r, "pearson", grid_ids=tuple(x.grid_ids))


def _pairwise_pearson(vals, obs, x, min_overlap):
    m = obs.astype(float)
    v = np.where(obs, vals, 0.0)
    cnt = m.T @ m
    if np.any(cnt < min_overlap):
        i, j = np.argwhere(cnt < min_overlap)[0]
        raise InsufficientDataError(
            f"pair ({x.columns[i].grid_id}, {x.columns[j].grid_id}) has {int(cnt[i, j])} "
            f"complete rows, need {min_overlap}")
    sx = v.T @ m            # sum of x_i over rows where j observed
    sxx = (v * v).T @ m
    sxy = v.T @ v
    cov = sxy - sx * sx.T / cnt
    var_i = sxx - sx ** 2 / cnt
    var_j = var_i.T
    if np.any(var_i <= 0):
        i, j = np.argwhere(var_i <= 0)[0]
        raise ZeroVarianceError(
            f"column {x.columns[i].grid_id} is constant over rows shared with {x.columns[j].grid_id}")
    return cov / np.sqrt(var_i * var_j)
