"""Synthetic spatial time series with known planted structure.

Used by the test-suite and for trying the CLI without external data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .ingest import GridMeta, StsMatrix


def lattice_grids(n_lat: int, n_lon: int, lat0: float = 8.5, lon0: float = 68.5,
                  zones: int = 2) -> list[GridMeta]:
    """Full lattice at 1 degree; zones are vertical bands of longitude."""
    grids = []
    band = max(1, -(-n_lon // zones))
    for i in range(n_lat):
        for j in range(n_lon):
            grids.append(GridMeta(f"g{i:02d}{j:02d}", lat0 + i, lon0 + j, 1 + j // band, True))
    return grids


def exp_correlation(grids, scale: float = 1.5) -> np.ndarray:
    pts = np.array([[g.lat, g.lon] for g in grids])
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    return np.exp(-d / scale)


def correlated_noise(rng, n: int, corr: np.ndarray) -> np.ndarray:
    return rng.standard_normal((n, corr.shape[0])) @ np.linalg.cholesky(corr).T


def planted_trends(n: int, p: int, rng, rank: int = 3) -> np.ndarray:
    """Smooth zero-mean unit-variance temporal trends (n, rank) shared across columns."""
    tt = np.linspace(0.0, 1.0, n)
    basis = [tt - 0.5, np.sin(2 * np.pi * 1.5 * tt), np.cos(2 * np.pi * 3.0 * tt),
             (tt - 0.5) ** 2, np.sin(2 * np.pi * 0.7 * tt + 0.3)]
    f = np.column_stack(basis[:rank])
    return (f - f.mean(0)) / f.std(0)


def planted_matrix(seed: int, n: int = 2000, n_lat: int = 5, n_lon: int = 10, rank: int = 3,
                   snr: float = 5.0, scale: float = 1.5):
    """Rank-``rank`` common temporal signal plus spatially correlated white noise.

    ``snr`` is the ratio of mean signal variance to noise variance per
    column.  Returns ``(values, noise_correlation, grids)``.
    """
    rng = np.random.default_rng(seed)
    grids = lattice_grids(n_lat, n_lon)
    p = len(grids)
    corr = exp_correlation(grids, scale)
    sig = planted_trends(n, p, rng, rank) @ rng.standard_normal((rank, p))
    sig *= np.sqrt(snr / sig.var(axis=0).mean())
    return sig + correlated_noise(rng, n, corr), corr, grids


def dtr_dataset(seed: int = 0, years=(1990, 1993), n_lat: int = 4, n_lon: int = 5,
                missing_grid: bool = True, regime_year: int | None = None) -> tuple[list[GridMeta], pd.DataFrame]:
    """Daily tmax/tmin for a small lattice, long form.

    DTR = 10 + seasonal cycle + slow common trend + spatially correlated
    noise.  With ``regime_year`` the noise correlation length jumps from
    short to long at that year.  One grid gets a gap when ``missing_grid``.
    """
    rng = np.random.default_rng(seed)
    grids = lattice_grids(n_lat, n_lon)
    dates = np.arange(np.datetime64(f"{years[0]}-01-01"), np.datetime64(f"{years[1] + 1}-01-01"))
    n, p = len(dates), len(grids)
    doy = (dates - dates.astype("datetime64[Y]").astype("datetime64[D]")).astype(int)
    season = 3.0 * np.sin(2 * np.pi * doy / 365.25)[:, None] * rng.uniform(0.3, 1.7, p)
    trend = np.linspace(-1, 1, n)[:, None] * rng.normal(0.0, 1.5, p)
    short, long = exp_correlation(grids, 0.7), exp_correlation(grids, 4.0)
    noise = correlated_noise(rng, n, short)
    if regime_year is not None:
        later = dates >= np.datetime64(f"{regime_year}-01-01")
        noise[later] = correlated_noise(rng, int(later.sum()), long)
    dtr = 10.0 + season + trend + noise
    tmin = 20.0 + 2.0 * rng.standard_normal((n, p))
    tmax = tmin + dtr
    date_col = np.repeat(dates.astype(str), p)
    grid_col = np.tile([g.grid_id for g in grids], n)
    tmax_s = np.char.mod("%.3f", tmax.ravel()).astype(object)
    tmin_s = np.char.mod("%.3f", tmin.ravel()).astype(object)
    if missing_grid:
        gap = (grid_col == grids[-1].grid_id) & (date_col >= f"{years[0]}-03-01") & (date_col < f"{years[0]}-03-05")
        tmin_s[gap] = "NA"
    df = pd.DataFrame({"date": date_col, "grid_id": grid_col, "tmax": tmax_s, "tmin": tmin_s})
    return grids, df


def write_dataset(directory, seed: int = 0, enso: bool = True, dmi: bool = True, **kwargs) -> dict:
    """Write grids.csv, series.csv and optional enso.csv / dmi.csv; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grids, df = dtr_dataset(seed, **kwargs)
    paths = {"grids": directory / "grids.csv", "series": directory / "series.csv"}
    pd.DataFrame([(g.grid_id, g.lat, g.lon, g.zone) for g in grids],
                 columns=["grid_id", "lat", "lon", "zone"]).to_csv(paths["grids"], index=False)
    df.to_csv(paths["series"], index=False)
    years = sorted({int(d[:4]) for d in df["date"].unique()})
    if enso:
        phases = ["elnino", "lanina", "neutral"]
        paths["enso"] = directory / "enso.csv"
        pd.DataFrame({"year": years, "phase": [phases[i % 3] for i in range(len(years))]}).to_csv(
            paths["enso"], index=False)
    if dmi:
        rng = np.random.default_rng(seed + 1)
        rows = [(y, m, round(float(rng.normal(0, 0.4)), 3)) for y in range(years[0] - 1, years[-1] + 1)
                for m in range(1, 13)]
        paths["dmi"] = directory / "dmi.csv"
        pd.DataFrame(rows, columns=["year", "month", "dmi"]).to_csv(paths["dmi"], index=False)
    return {k: str(v) for k, v in paths.items()}


def as_sts(values, grids, start="2000-01-01", label="X") -> StsMatrix:
    values = np.asarray(values, dtype=float)
    idx = np.datetime64(start, "D") + np.arange(values.shape[0])
    return StsMatrix(values, np.zeros(values.shape, bool), idx, grids, label)
