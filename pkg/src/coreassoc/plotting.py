"""Matplotlib figures for pipeline outputs.

All figures are written with the Agg backend and fixed metadata so that
re-rendering the same tables gives byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "svg.hashsalt": "coreassoc",
    "svg.fonttype": "none",
}
DIVERGING = "RdBu_r"


def _save(fig, path: Path, fmt: str):
    meta = {"Date": None} if fmt == "svg" else {}
    fig.savefig(path, format=fmt, metadata=meta, bbox_inches="tight")
    plt.close(fig)


def heatmap(m: np.ndarray, title: str = "", lower: np.ndarray | None = None):
    """Association heatmap on a fixed [-1, 1] diverging scale.

    With ``lower`` given, the lower triangle shows ``lower`` and the upper
    triangle ``m`` (e.g. raw vs denoised).
    """
    shown = np.array(m, dtype=float)
    if lower is not None:
        il = np.tril_indices_from(shown, -1)
        shown[il] = np.asarray(lower)[il]
    fig, ax = plt.subplots(figsize=(5, 4.3))
    im = ax.imshow(shown, cmap=DIVERGING, vmin=-1, vmax=1, interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(title)
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.yaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_xlabel("location (ordered)")
    ax.set_ylabel("location (ordered)")
    return fig


def acf_profile(trim: dict):
    fig, ax = plt.subplots(figsize=(5, 3))
    depth = np.arange(len(trim["acf_profile"]))
    ax.plot(depth, trim["acf_profile"], marker="o", label="max |ACF(1)|")
    if trim.get("acf_window_profile"):
        ax.plot(depth, trim["acf_window_profile"], marker="s", label=f"max |ACF(1..{trim['acf_lags']})|")
    if np.isfinite(trim.get("acf_threshold", np.nan)):
        ax.axhline(trim["acf_threshold"], color="k", lw=0.8, ls="--")
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_xlabel("components removed")
    ax.set_ylabel("autocorrelation")
    ax.legend()
    return fig


def singular_values(trim: dict):
    fig, ax = plt.subplots(figsize=(5, 3))
    sv = np.asarray(trim["singular_values"])
    ax.semilogy(np.arange(1, sv.size + 1), sv, marker=".", lw=0.8, label="observed")
    if "null_thresholds" in trim:
        ax.semilogy(np.arange(1, sv.size + 1), trim["null_thresholds"], lw=0.8, ls="--", label="null quantile")
    ax.axvline(trim["depth_d"] + 0.5, color="k", lw=0.8, ls=":")
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.set_xlabel("rank")
    ax.set_ylabel("singular value")
    ax.legend()
    return fig


def esd_lines(esd: pd.DataFrame):
    fig, ax = plt.subplots(figsize=(6, 3))
    x = np.arange(len(esd))
    for col in ("q05", "q25", "q50", "q75", "q95"):
        ax.plot(x, esd[col], lw=1.2 if col == "q50" else 0.7, label=col)
    ax.set_xticks(x[:: max(1, len(x) // 12)])
    ax.set_xticklabels(esd["window"].astype(str).iloc[:: max(1, len(x) // 12)], rotation=45, ha="right")
    ax.set_ylabel("eigenvalue quantile")
    ax.legend(ncol=5, fontsize=7)
    return fig


def sb_lines(sb: pd.DataFrame):
    groups = list(sb.groupby(["scheme", "method"], sort=True))
    fig, axes = plt.subplots(len(groups), 1, figsize=(6, 2.4 * len(groups)), squeeze=False)
    for ax, ((scheme, method), grp) in zip(axes[:, 0], groups):
        labels = list(dict.fromkeys(grp["window"].astype(str)))
        pos = {lab: i for i, lab in enumerate(labels)}
        for region, g in grp.groupby("region", sort=True):
            ax.plot([pos[v] for v in g["window"].astype(str)], g["value"], lw=0.9, label=region)
        step = max(1, len(labels) // 12)
        ax.set_xticks(range(0, len(labels), step))
        ax.set_xticklabels(labels[::step], rotation=45, ha="right")
        ax.set_ylabel(f"S_B ({scheme}, {method})")
        ax.legend(fontsize=7, ncol=4)
    fig.tight_layout()
    return fig


def partner_histogram(hist: pd.DataFrame):
    fig, axes = plt.subplots(1, 2, figsize=(6, 2.6), sharey=True)
    for ax, axis in zip(axes, ("dlat", "dlon")):
        h = hist[hist["axis"] == axis]
        ax.bar(h["offset"], h["count"], width=0.8)
        ax.set_xlabel(f"{axis} (grid steps)")
    axes[0].set_ylabel("grids")
    return fig


def enso_summary(enso: pd.DataFrame):
    fig, ax = plt.subplots(figsize=(5, 3))
    labels = [f"{r.region}/{r.scheme}/{r.phase}" for r in enso.itertuples()]
    ax.errorbar(np.arange(len(enso)), enso["mean"], yerr=enso["sd"].fillna(0), fmt="o", capsize=3)
    ax.set_xticks(np.arange(len(enso)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("S_B mean +- sd")
    return fig


def iod_lags(iod: pd.DataFrame):
    fig, ax = plt.subplots(figsize=(5, 3))
    for key, g in iod.groupby(["region", "scheme", "method"], sort=True):
        ax.plot(g["lag"], g["correlation"], marker="o", lw=0.9, label="/".join(key))
    ax.axhline(0, color="k", lw=0.6)
    ax.set_xlabel("DMI lag (months)")
    ax.set_ylabel("correlation with S_B")
    ax.legend(fontsize=7)
    return fig


def _read_assoc(path: Path) -> np.ndarray:
    return pd.read_csv(path, dtype={"grid_id": str}).iloc[:, 1:].to_numpy(dtype=float)


def render_outputs(out: Path, files, fmt: str = "png") -> list[str]:
    """Render every figure that the available tables support.

    ``files`` are names relative to ``out``.  Returns the figure names
    written, relative to ``out``.
    """
    out = Path(out)
    files = set(files)
    written = []

    def emit(fig, name):
        rel = f"figures/{name}.{fmt}"
        (out / "figures").mkdir(exist_ok=True)
        _save(fig, out / rel, fmt)
        written.append(rel)

    with plt.rc_context(STYLE):
        for tag in ("D", "T", "S"):
            raw, den = f"R_{tag}.csv", f"Rhat_{tag}.csv"
            if raw in files:
                lower = _read_assoc(out / den) if den in files else None
                title = f"R_{tag} (upper) / MP-denoised (lower)" if lower is not None else f"R_{tag}"
                emit(heatmap(_read_assoc(out / raw), title, lower), f"heatmap_R_{tag}")
        if "B_S.csv" in files:
            emit(heatmap(_read_assoc(out / "B_S.csv"), "B_S"), "heatmap_B_S")
        if "trim.json" in files:
            trim = json.loads((out / "trim.json").read_text())
            if trim["acf_profile"]:
                emit(acf_profile(trim), "acf_profile")
            emit(singular_values(trim), "singular_values")
        if "esd.csv" in files:
            esd = pd.read_csv(out / "esd.csv", dtype={"window": str})
            if len(esd) > 1:
                emit(esd_lines(esd), "esd_quantiles")
        if "sb_series.csv" in files:
            sb = pd.read_csv(out / "sb_series.csv", dtype={"window": str})
            if len(sb):
                emit(sb_lines(sb), "sb_series")
        if "partners_hist.csv" in files:
            emit(partner_histogram(pd.read_csv(out / "partners_hist.csv")), "partner_offsets")
        if "enso.csv" in files:
            emit(enso_summary(pd.read_csv(out / "enso.csv")), "enso")
        if "iod.csv" in files:
            emit(iod_lags(pd.read_csv(out / "iod.csv")), "iod_lags")
    return written
