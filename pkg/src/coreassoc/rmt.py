"""Marčenko-Pastur bulk edges, eigenvalue classification, truncation
denoising and empirical spectral distribution summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError, StructuralError
from .linalg import AssociationMatrix, EigenFactors, eig_sym

PROBES = (0.05, 0.25, 0.5, 0.75, 0.95)
ESD_COLUMNS = ["window", "q05", "q25", "q50", "q75", "q95", "mean", "n_significant"]


@dataclass(frozen=True)
class MpBounds:
    gamma: float
    lower: float
    upper: float


@dataclass
class Esd:
    eigenvalues: np.ndarray
    quantiles: dict = field(default_factory=dict)
    mean: float = float("nan")

    @property
    def median(self) -> float:
        return self.quantiles[0.5]


def mp_bounds(p: int, n: int, allow_wide: bool = False) -> MpBounds:
    """Bulk edges ``(1 -+ sqrt(p/n))**2`` for a unit-variance correlation matrix.

    ``allow_wide`` admits p > n (the edges then bound the non-zero part
    of the spectrum); the default contract insists on p <= n.
    """
    if p <= 0 or n <= 0:
        raise DataError(f"p and n must be positive, got p={p}, n={n}")
    if p > n and not allow_wide:
        raise DataError(f"aspect ratio p/n = {p}/{n} exceeds 1")
    gamma = p / n
    root = math.sqrt(gamma)
    return MpBounds(gamma, (1.0 - root) ** 2, (1.0 + root) ** 2)


def significant_eigs(e: EigenFactors, bounds: MpBounds) -> int:
    return int(np.sum(np.asarray(e.eigenvalues) > bounds.upper))


def mp_denoise(r: AssociationMatrix, k: int, eig: EigenFactors | None = None) -> AssociationMatrix:
    """Keep the top-``k`` spectral terms; the diagonal is *not* reset to one."""
    p = r.p
    if not 0 <= k <= p:
        raise DataError(f"k must be in [0, {p}], got {k}")
    e = eig if eig is not None else eig_sym(r.m)
    vecs = e.eigenvectors[:, :k]
    m = (vecs * e.eigenvalues[:k]) @ vecs.T
    m = 0.5 * (m + m.T)
    return AssociationMatrix(m, r.method, r.window, r.region, r.grid_ids,
                             note=f"mp_denoise(source={r.method}, k={k})")


def rescale_diagonal(r: AssociationMatrix) -> AssociationMatrix:
    d = np.sqrt(np.clip(np.diag(r.m), np.finfo(float).tiny, None))
    m = r.m / np.outer(d, d)
    np.fill_diagonal(m, 1.0)
    return AssociationMatrix(m, r.method, r.window, r.region, r.grid_ids, note=r.note + "+rescaled")


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Quantile as the order statistic at 0-based position ``floor(q * p)``."""
    p = len(sorted_values)
    idx = min(p - 1, int(math.floor(q * p)))
    return float(sorted_values[idx])


def esd(e: EigenFactors) -> Esd:
    vals = np.sort(np.asarray(e.eigenvalues, dtype=float))
    if vals.size == 0:
        raise StructuralError("empty spectrum")
    return Esd(vals, {q: nearest_rank(vals, q) for q in PROBES}, float(vals.sum() / vals.size))


def esd_series(windows: Sequence[AssociationMatrix], n_per_window) -> pd.DataFrame:
    """One row per window: probe quantiles, mean, MP-significant count, top eigenvalue.

    ``n_per_window`` is the number of time points behind each matrix, either
    one integer for all windows or one per window.
    """
    if not windows:
        return pd.DataFrame(columns=ESD_COLUMNS + ["lambda_max"])
    p = windows[0].p
    if any(w.p != p for w in windows):
        raise StructuralError("all windows must share the same dimension")
    ns = [n_per_window] * len(windows) if np.isscalar(n_per_window) else list(n_per_window)
    if len(ns) != len(windows):
        raise StructuralError("n_per_window length does not match windows")
    rows = []
    for w, n in zip(windows, ns):
        e = eig_sym(w.m)
        s = esd(e)
        bounds = mp_bounds(p, int(n), allow_wide=True)
        rows.append([w.window, *(s.quantiles[q] for q in PROBES), s.mean,
                     significant_eigs(e, bounds), float(s.eigenvalues[-1])])
    return pd.DataFrame(rows, columns=ESD_COLUMNS + ["lambda_max"])
