"""Permutation null for singular values and ACF-driven trimming of the
dominant temporal components."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError
from .ingest import StsMatrix
from .linalg import SvdFactors, acf_matrix, gsvd, svd

log = logging.getLogger(__name__)

DEFAULT_QUANTILE = 0.95
DEFAULT_ACF_THRESHOLD = 0.1
DEFAULT_ACF_LAGS = 30


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2 ** 64 - 1), replicate]))


def permute_columns(d: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shuffle every column independently."""
    return rng.permuted(d, axis=0)


@dataclass
class SvNullModel:
    n_perm: int
    quantile: float
    thresholds: np.ndarray
    seed: int


@dataclass
class TrimResult:
    trimmed: StsMatrix
    depth_d: int
    significant_s: int
    removed: list
    acf_profile: np.ndarray
    sv_share_removed: float
    acf_window_profile: np.ndarray = field(default_factory=lambda: np.empty(0))
    criterion_met: bool = True
    cap_hit: bool = False
    singular_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    acf_threshold: float = float("nan")
    acf_lags: int = 0

    def components_frame(self, grid_ids) -> tuple[pd.DataFrame, pd.DataFrame]:
        """Removed right vectors (per grid) and left vectors (per time point)."""
        cols = [f"k{k + 1}" for k in range(len(self.removed))]
        right = pd.DataFrame({c: v for c, (_, _, v) in zip(cols, self.removed)})
        right.insert(0, "grid_id", list(grid_ids))
        left = pd.DataFrame({c: u for c, (_, u, _) in zip(cols, self.removed)})
        left.insert(0, "date", self.trimmed.time_index.astype(str))
        return left, right

    def report(self) -> dict:
        return {
            "depth_d": int(self.depth_d),
            "significant_s": int(self.significant_s),
            "criterion_met": bool(self.criterion_met),
            "cap_hit": bool(self.cap_hit),
            "acf_threshold": float(self.acf_threshold),
            "acf_lags": int(self.acf_lags),
            "sv_share_removed": float(self.sv_share_removed),
            "removed_singular_values": [float(lam) for lam, _, _ in self.removed],
            "acf_profile": [float(v) for v in self.acf_profile],
            "acf_window_profile": [float(v) for v in self.acf_window_profile],
            "singular_values": [float(v) for v in self.singular_values],
        }


def _complete(d: StsMatrix) -> np.ndarray:
    if d.mask.any():
        raise DataError(f"matrix {d.label} has masked entries; trimming needs complete data")
    return d.values


def sv_null_thresholds(d: StsMatrix, n_perm: int = 500, quantile: float = DEFAULT_QUANTILE,
                       seed: int = 0, jobs: int = 1) -> SvNullModel:
    """Per-rank null quantiles of singular values under column-wise shuffling.

    Replicate ``r`` draws from a stream seeded by ``(seed, r)``, so the
    thresholds do not depend on ``jobs``.
    """
    vals = _complete(d)
    if n_perm < 2:
        raise DataError(f"n_perm must be at least 2, got {n_perm}")
    if not 0.0 < quantile < 1.0:
        raise DataError(f"quantile must be in (0, 1), got {quantile}")

    def one(r):
        return np.linalg.svd(permute_columns(vals, replicate_rng(seed, r)), compute_uv=False)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            null = np.array(list(ex.map(one, range(n_perm))))
    else:
        null = np.array([one(r) for r in range(n_perm)])
    thresholds = np.quantile(null, quantile, axis=0)
    return SvNullModel(n_perm, quantile, thresholds, seed)


def count_significant(sv, null: SvNullModel) -> int:
    """Length of the leading run of singular values above their null thresholds."""
    sv = np.asarray(sv, dtype=float)
    if sv.shape != null.thresholds.shape:
        raise DataError(f"{sv.size} singular values vs {null.thresholds.size} thresholds")
    above = sv > null.thresholds
    return int(above.size if above.all() else np.argmin(above))


def _trimmed(vals: np.ndarray, f: SvdFactors, depth: int) -> np.ndarray:
    if depth == 0:
        return vals.copy()
    return vals - f.reconstruct(depth)


def _result(d, vals, f, depth, s, profile1, profilew, met, cap, thr, lags):
    sv = f.singular_values
    total = sv.sum()
    share = float(sv[:depth].sum() / total) if total > 0 else 0.0
    removed = [(float(sv[k]), f.left_vectors[:, k].copy(), f.right_vectors[:, k].copy())
               for k in range(depth)]
    trimmed = d.replace(values=_trimmed(vals, f, depth), mask=d.mask.copy(), label="S")
    return TrimResult(trimmed, depth, s, removed, np.asarray(profile1), share,
                      np.asarray(profilew), met, cap, sv.copy(), thr, lags)


def trim_to_depth(d: StsMatrix, depth: int, factors: SvdFactors | None = None) -> TrimResult:
    """``S = D - sum_{k<=depth} lambda_k u_k v_k^T``, without centring ``D``."""
    vals = _complete(d)
    kmax = min(vals.shape)
    if not 0 <= depth <= kmax:
        raise DataError(f"depth must be in [0, {kmax}], got {depth}")
    f = factors if factors is not None else svd(vals)
    return _result(d, vals, f, depth, depth, [], [], True, False, float("nan"), 0)


def _acf_stats(s: np.ndarray, lags: int) -> tuple[float, float]:
    r = np.abs(acf_matrix(s, lags))
    return float(r[0].max()), float(r.max())


def algorithm1(d: StsMatrix, acf_threshold: float = DEFAULT_ACF_THRESHOLD,
               acf_lags: int = DEFAULT_ACF_LAGS, null: SvNullModel | None = None,
               significant: int | None = None) -> TrimResult:
    """Trim top singular components until every column's ACF is small.

    Depth ``j`` is accepted as soon as ``max |ACF|`` over columns and lags
    ``1..acf_lags`` is at most ``acf_threshold``.  The search is capped at
    the number of significant singular values ``s`` (from ``null`` or given
    directly as ``significant``); if the cap is reached the result records
    ``cap_hit``.
    """
    vals = _complete(d)
    if not acf_threshold > 0:
        raise DataError(f"acf_threshold must be positive, got {acf_threshold}")
    f = svd(vals)
    if significant is None:
        if null is None:
            raise DataError("either a null model or a significant count is required")
        significant = count_significant(f.singular_values, null)
    s = int(significant)

    profile1, profilew = [], []
    s_mat = vals.copy()
    depth, met = 0, False
    for j in range(0, s + 1):
        if j > 0:
            s_mat -= f.singular_values[j - 1] * np.outer(f.left_vectors[:, j - 1], f.right_vectors[:, j - 1])
        a1, aw = _acf_stats(s_mat, acf_lags)
        profile1.append(a1)
        profilew.append(aw)
        log.debug("depth %d: max|ACF(1)|=%.4f, max|ACF(1..%d)|=%.4f", j, a1, acf_lags, aw)
        depth = j
        if aw <= acf_threshold:
            met = True
            break
    cap = not met
    if cap:
        log.warning("ACF criterion not met before exhausting %d significant components", s)
    return _result(d, vals, f, depth, s, profile1, profilew, met, cap, acf_threshold, acf_lags)


def gsvd_retention_check(d: StsMatrix, s: StsMatrix, n_perm: int = 100, seed: int = 0,
                         band=(0.025, 0.975)) -> pd.DataFrame:
    """Compare generalized singular values of (D, S) with a shuffled-D null.

    Returns one row per rank with the observed value, the null band and
    whether the observed value lies inside it.  ``frame.attrs`` carries
    ``fraction_inside``.
    """
    dv, sv = _complete(d), _complete(s)
    if dv.shape[1] != sv.shape[1]:
        raise DataError(f"column counts differ: {dv.shape[1]} vs {sv.shape[1]}")
    observed = gsvd(dv, sv).generalized_values
    null = np.array([gsvd(permute_columns(dv, replicate_rng(seed, r)), sv).generalized_values
                     for r in range(n_perm)])
    with np.errstate(invalid="ignore"):
        lo = np.quantile(null, band[0], axis=0, method="lower")
        hi = np.quantile(null, band[1], axis=0, method="higher")
    inside = (observed >= lo) & (observed <= hi)
    frame = pd.DataFrame({"rank": np.arange(1, observed.size + 1), "observed": observed,
                          "null_lo": lo, "null_hi": hi, "inside": inside})
    frame.attrs["fraction_inside"] = float(inside.mean())
    return frame
