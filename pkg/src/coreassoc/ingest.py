"""Loading, DTR construction, missingness handling and aggregation.

Series are held as :class:`StsMatrix` objects: an ``(n, p)`` array with
time along rows and locations along columns.  Masked entries are stored
as NaN in ``values`` *and* flagged in ``mask``; every unmasked entry is
finite.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, EmptySelectionError, StructuralError

log = logging.getLogger(__name__)

DEFAULT_MISSING = "NA"
LABELS = ("X", "D", "T", "S")


@dataclass(frozen=True)
class GridMeta:
    grid_id: str
    lat: float
    lon: float
    zone: int = 1
    complete: bool = False


@dataclass(frozen=True)
class DtrConfig:
    missing_token: str = DEFAULT_MISSING
    complete_only: bool = True
    aggregate: str = "none"
    min_coverage: float = 0.0

    def __post_init__(self):
        if not self.missing_token:
            raise DataError("missing_token must be a non-empty string")
        if self.aggregate not in ("none", "monthly", "yearly"):
            raise DataError(f"unknown aggregation level {self.aggregate!r}")
        if not 0.0 <= self.min_coverage <= 1.0:
            raise DataError("min_coverage must lie in [0, 1]")


@dataclass
class StsMatrix:
    """Spatial time series: rows are time points, columns are locations.

    ``time_index`` is a ``datetime64`` array whose unit encodes the
    resolution: ``D`` (daily), ``M`` (monthly) or ``Y`` (yearly).
    """

    values: np.ndarray
    mask: np.ndarray
    time_index: np.ndarray
    columns: tuple
    label: str = "X"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.ndim != 2:
            raise StructuralError(f"values must be 2-D, got shape {self.values.shape}")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise StructuralError(
                f"mask shape {self.mask.shape} != values shape {self.values.shape}")
        self.time_index = np.asarray(self.time_index)
        if not np.issubdtype(self.time_index.dtype, np.datetime64):
            self.time_index = self.time_index.astype("datetime64")
        self.columns = tuple(self.columns)
        n, p = self.values.shape
        if len(self.time_index) != n:
            raise StructuralError(f"time_index has {len(self.time_index)} entries for {n} rows")
        if len(self.columns) != p:
            raise StructuralError(f"{len(self.columns)} column descriptors for {p} columns")
        if n > 1 and not np.all(self.time_index[1:] > self.time_index[:-1]):
            raise StructuralError("time_index must be strictly increasing")
        if self.label not in LABELS:
            raise StructuralError(f"label must be one of {LABELS}, got {self.label!r}")
        bad = ~self.mask & ~np.isfinite(self.values)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DataError(f"non-finite unmasked value at row {i}, column {self.columns[j].grid_id}")
        self.values[self.mask] = np.nan

    @property
    def shape(self):
        return self.values.shape

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def freq(self) -> str:
        return np.datetime_data(self.time_index.dtype)[0]

    @property
    def grid_ids(self) -> list[str]:
        return [g.grid_id for g in self.columns]

    @property
    def complete(self) -> bool:
        return not self.mask.any()

    def replace(self, **changes) -> "StsMatrix":
        return dataclasses.replace(self, **changes)

    def take_columns(self, idx) -> "StsMatrix":
        idx = np.asarray(idx, dtype=int)
        return self.replace(values=self.values[:, idx], mask=self.mask[:, idx],
                            columns=tuple(self.columns[i] for i in idx))

    def take_rows(self, idx) -> "StsMatrix":
        return self.replace(values=self.values[idx], mask=self.mask[idx],
                            time_index=self.time_index[idx])

    def filled(self) -> np.ndarray:
        """Values as a plain array; raises if anything is masked."""
        if self.mask.any():
            raise DataError(f"matrix {self.label} has {int(self.mask.sum())} masked entries")
        return self.values


def from_array(values, time_index=None, columns=None, label="X", start="2000-01-01") -> StsMatrix:
    """Wrap a complete array; synthesises daily dates and grid ids when not given."""
    values = np.asarray(values, dtype=float)
    n, p = values.shape
    if time_index is None:
        time_index = np.datetime64(start, "D") + np.arange(n)
    if columns is None:
        columns = [GridMeta(f"g{j:04d}", 0.0, float(j), 1, True) for j in range(p)]
    return StsMatrix(values, ~np.isfinite(values), time_index, columns, label)


# -- loading -----------------------------------------------------------------

def load_grids(path) -> list[GridMeta]:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    expected = ["grid_id", "lat", "lon", "zone"]
    if list(df.columns[:4]) != expected:
        raise DataError(f"{path}: header must start with {','.join(expected)}")
    grids = []
    for rowno, row in enumerate(df.itertuples(index=False), start=2):
        try:
            lat, lon, zone = float(row.lat), float(row.lon), int(row.zone)
        except ValueError as exc:
            raise DataError(f"{path}:{rowno}: {exc}") from None
        if not (np.isfinite(lat) and np.isfinite(lon)):
            raise DataError(f"{path}:{rowno}: non-finite coordinate")
        if zone < 1:
            raise DataError(f"{path}:{rowno}: zone must be >= 1, got {zone}")
        grids.append(GridMeta(row.grid_id, lat, lon, zone))
    ids = [g.grid_id for g in grids]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise DataError(f"{path}: duplicate grid_id {dup!r}")
    if not grids:
        raise EmptySelectionError(f"{path}: no grids")
    return grids


def _parse_numeric(col: pd.Series, token: str, where: str) -> tuple[np.ndarray, np.ndarray]:
    missing = (col == token).to_numpy()
    out = np.full(len(col), np.nan)
    present = col[~missing]
    try:
        parsed = np.array(present.to_numpy(), dtype=float)
    except (ValueError, TypeError) as exc:
        raise DataError(f"{where}: unparsable numeric field ({exc})") from None
    if not np.all(np.isfinite(parsed)):
        raise DataError(f"{where}: non-finite numeric field")
    out[~missing] = parsed
    return out, missing


def load_series(path, grids: Sequence[GridMeta], missing_token: str = DEFAULT_MISSING):
    """Read a long-form series CSV.

    Returns ``(tmax, tmin)`` for ``date,grid_id,tmax,tmin`` files and a single
    DTR matrix for ``date,grid_id,value`` files.  (date, grid) combinations
    absent from the file are masked.
    """
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    cols = list(df.columns)
    if cols[:4] == ["date", "grid_id", "tmax", "tmin"]:
        fields = ["tmax", "tmin"]
    elif cols[:3] == ["date", "grid_id", "value"]:
        fields = ["value"]
    else:
        raise DataError(f"{path}: header must be date,grid_id,tmax,tmin or date,grid_id,value")

    known = {g.grid_id: j for j, g in enumerate(grids)}
    unknown = set(df["grid_id"]) - set(known)
    if unknown:
        raise DataError(f"{path}: grid_id {sorted(unknown)[0]!r} not in grid metadata")
    try:
        dates = df["date"].to_numpy().astype("datetime64[D]")
    except ValueError as exc:
        raise DataError(f"{path}: bad date ({exc})") from None

    time_index, rows = np.unique(dates, return_inverse=True)
    cols_idx = df["grid_id"].map(known).to_numpy()
    key = rows.astype(np.int64) * len(grids) + cols_idx
    if len(np.unique(key)) != len(key):
        raise DataError(f"{path}: duplicate (date, grid_id) rows")

    out = []
    for name in fields:
        vals, miss = _parse_numeric(df[name], missing_token, f"{path} column {name}")
        grid = np.full((len(time_index), len(grids)), np.nan)
        grid[rows, cols_idx] = np.where(miss, np.nan, vals)
        mask = np.isnan(grid)
        columns = [dataclasses.replace(g, complete=not mask[:, j].any()) for j, g in enumerate(grids)]
        out.append(StsMatrix(grid, mask, time_index, columns, "X"))
    return tuple(out) if len(out) == 2 else out[0]


# -- operations --------------------------------------------------------------

def _check_aligned(a: StsMatrix, b: StsMatrix):
    if a.shape != b.shape:
        raise StructuralError(f"shape mismatch: {a.shape} vs {b.shape}")
    if not np.array_equal(a.time_index, b.time_index):
        i = int(np.argmax(a.time_index != b.time_index))
        raise StructuralError(f"time_index differs at row {i}: {a.time_index[i]} vs {b.time_index[i]}")
    for j, (ga, gb) in enumerate(zip(a.columns, b.columns)):
        if ga.grid_id != gb.grid_id:
            raise StructuralError(f"columns differ at position {j}: {ga.grid_id} vs {gb.grid_id}")


def compute_dtr(tmax: StsMatrix, tmin: StsMatrix) -> StsMatrix:
    _check_aligned(tmax, tmin)
    mask = tmax.mask | tmin.mask
    values = np.where(mask, np.nan, tmax.values - tmin.values)
    negative = int(np.sum(values[~mask] < 0))
    if negative:
        log.warning("%d negative DTR values (tmax < tmin)", negative)
    return StsMatrix(values, mask, tmax.time_index, tmax.columns, "X",
                     meta={"negative_dtr": negative})


def filter_complete(x: StsMatrix) -> StsMatrix:
    keep = np.flatnonzero(~x.mask.any(axis=0))
    if keep.size == 0:
        raise EmptySelectionError("no column is fully observed")
    out = x.take_columns(keep)
    out.columns = tuple(dataclasses.replace(g, complete=True) for g in out.columns)
    return out


def aggregate(x: StsMatrix, level: str, min_coverage: float = 0.0) -> StsMatrix:
    """Per-period mean of the observed daily values.

    A period/column cell is masked when nothing in it was observed, or when
    the observed fraction falls below ``min_coverage``.
    """
    if x.freq != "D":
        raise StructuralError(f"aggregate expects a daily index, got unit {x.freq!r}")
    unit = {"monthly": "M", "yearly": "Y"}.get(level)
    if unit is None:
        raise DataError(f"unknown aggregation level {level!r}")
    periods = x.time_index.astype(f"datetime64[{unit}]")
    index, inverse, counts = np.unique(periods, return_inverse=True, return_counts=True)
    observed = (~x.mask).astype(float)
    sums = np.zeros((len(index), x.p))
    nobs = np.zeros((len(index), x.p))
    np.add.at(sums, inverse, np.where(x.mask, 0.0, x.values))
    np.add.at(nobs, inverse, observed)
    mask = (nobs == 0) | (nobs < min_coverage * counts[:, None])
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(mask, np.nan, sums / np.where(nobs == 0, 1, nobs))
    return StsMatrix(values, mask, index, x.columns, x.label, dict(x.meta))


def _period_end(value) -> np.datetime64:
    v = np.datetime64(value)
    return v + np.timedelta64(1, np.datetime_data(v.dtype)[0])


def slice_window(x: StsMatrix, time_range=None, zones: Iterable[int] | None = None) -> StsMatrix:
    """Restrict to rows within ``time_range`` and columns in ``zones``.

    Both ends of ``time_range`` are inclusive at their own resolution, so
    ``("1968", "1968")`` selects the whole of 1968 from daily data.
    """
    rows = np.ones(x.n, dtype=bool)
    if time_range is not None:
        start, stop = time_range
        if start is not None:
            rows &= x.time_index >= np.datetime64(start)
        if stop is not None:
            rows &= x.time_index < _period_end(stop)
    cols = np.ones(x.p, dtype=bool)
    if zones is not None:
        zones = set(int(z) for z in zones)
        cols = np.array([g.zone in zones for g in x.columns], dtype=bool)
    if not rows.any() or not cols.any():
        raise EmptySelectionError(f"empty selection for time_range={time_range}, zones={zones}")
    return x.take_rows(np.flatnonzero(rows)).take_columns(np.flatnonzero(cols))


def zones_of(x: StsMatrix) -> list[int]:
    return sorted({g.zone for g in x.columns})


# -- wide CSV ----------------------------------------------------------------

def write_sts_csv(x: StsMatrix, path, missing_token: str = DEFAULT_MISSING):
    df = pd.DataFrame(x.values, columns=x.grid_ids)
    df.insert(0, "date", x.time_index.astype(str))
    df.to_csv(path, index=False, na_rep=missing_token, float_format="%.17g", lineterminator="\n")


def read_sts_csv(path, grids: Sequence[GridMeta] | None = None, label: str = "X",
                 missing_token: str = DEFAULT_MISSING) -> StsMatrix:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if df.columns[0] != "date":
        raise DataError(f"{path}: first header field must be 'date'")
    ids = list(df.columns[1:])
    if grids is None:
        columns = [GridMeta(g, np.nan, np.nan, 1) for g in ids]
    else:
        lookup = {g.grid_id: g for g in grids}
        missing = [g for g in ids if g not in lookup]
        if missing:
            raise DataError(f"{path}: grid_id {missing[0]!r} not in grid metadata")
        columns = [lookup[g] for g in ids]
    values = np.empty((len(df), len(ids)))
    mask = np.zeros_like(values, dtype=bool)
    for j, g in enumerate(ids):
        values[:, j], mask[:, j] = _parse_numeric(df[g], missing_token, f"{path} column {g}")
    time_index = np.array([np.datetime64(s) for s in df["date"]])
    return StsMatrix(values, mask, time_index, columns, label)
