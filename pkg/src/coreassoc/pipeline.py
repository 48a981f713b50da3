"""End-to-end workflow: ingest -> order -> trim -> association matrices
-> MP denoising / ESD -> Spatial Bergsma series -> teleconnection joins.

Every file written by :func:`run` is listed, with its SHA-256 digest, in
``manifest.json`` inside the output directory.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .dependence import bergsma_matrix, make_weights, spatial_bergsma
from .errors import ConfigError, CoreAssocError, DataError, InsufficientDataError
from .ingest import (GridMeta, StsMatrix, aggregate, compute_dtr, filter_complete,
                     load_grids, load_series, slice_window, write_sts_csv)
from .linalg import AssociationMatrix, classical_detrend, eig_sym, pearson_matrix
from .ordering import apply_order, make_order, order_table
from .rmt import ESD_COLUMNS, esd_series, mp_bounds, mp_denoise, rescale_diagonal, significant_eigs
from .tables import digest, write_assoc_csv, write_frame, write_json
from .trim import algorithm1, gsvd_retention_check, sv_null_thresholds, trim_to_depth

log = logging.getLogger(__name__)

WINDOW_PLANS = ("whole", "yearly", "monthly")
REGION_PLANS = ("all", "per-zone", "both")
ASSOC_METHODS = ("pearson", "bergsma")
ENSO_PHASES = ("elnino", "lanina", "neutral")
SB_COLUMNS = ["window", "region", "scheme", "method", "value"]


@dataclass
class RunConfig:
    grids: str = ""
    series: str = ""
    out: str = "out"
    enso: str | None = None
    dmi: str | None = None
    missing_token: str = "NA"
    complete_only: bool = True
    aggregate: str = "none"
    min_coverage: float = 0.0
    order: str = "spiral"
    stratify: bool = True
    hilbert_bits: int = 16
    n_perm: int = 500
    quantile: float = 0.95
    acf_threshold: float = 0.1
    acf_lags: int = 30
    seed: int | None = None
    depth: int | None = None
    trim_scope: str = "global"
    gsvd_perm: int = 0
    schemes: tuple = ("lag1", "expdecay")
    adjacency: str = "rook"
    theta: float = 1.0
    windows: str = "yearly"
    regions: str = "all"
    methods: tuple = ("pearson", "bergsma")
    compare: bool = True
    partners: bool = True
    rescale_diagonal: bool = False
    max_lag: int = 6
    figures: bool = False
    figure_format: str = "png"
    jobs: int = 1

    def validate(self, check_files: bool = True) -> "RunConfig":
        if check_files:
            for name in ("grids", "series", "enso", "dmi"):
                path = getattr(self, name)
                if name in ("grids", "series") and not path:
                    raise ConfigError(f"config key {name!r} is required")
                if path and not Path(path).is_file():
                    raise ConfigError(f"{name} file not found: {path}")
        choices = {"aggregate": ("none", "monthly", "yearly"), "order": ("spiral", "hilbert", "identity"),
                   "trim_scope": ("global", "per-window"), "adjacency": ("rook", "queen"),
                   "windows": WINDOW_PLANS, "regions": REGION_PLANS, "figure_format": ("png", "svg")}
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        bad = set(self.methods) - set(ASSOC_METHODS)
        if bad or not self.methods:
            raise ConfigError(f"methods must be a non-empty subset of {ASSOC_METHODS}")
        bad = set(self.schemes) - {"lag1", "expdecay"}
        if bad:
            raise ConfigError(f"unknown weight scheme(s) {sorted(bad)}")
        if self.depth is None and self.seed is None:
            raise ConfigError("a seed is required when the permutation null is used")
        if self.gsvd_perm and self.seed is None:
            raise ConfigError("a seed is required for the GSVD null")
        if not 0 < self.quantile < 1 or self.n_perm < 2 or self.acf_lags < 1 or self.acf_threshold <= 0:
            raise ConfigError("invalid trimming parameters")
        if self.theta <= 0 or self.jobs < 1 or self.max_lag < 0:
            raise ConfigError("theta, jobs and max_lag must be positive")
        return self

    @classmethod
    def from_ini(cls, path, **overrides) -> "RunConfig":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
        section = cp["run"] if cp.has_section("run") else cp[cp.default_section]
        values = {}
        for key, raw in section.items():
            values[key] = raw
        values.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls.from_mapping(values)
        base = Path(path).parent
        for name in ("grids", "series", "enso", "dmi"):
            v = getattr(cfg, name)
            if v and not Path(v).is_absolute() and name not in overrides:
                setattr(cfg, name, str(base / v))
        return cfg

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(fields[key], raw)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(f, raw):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    text = raw.strip()
    kind = str(f.type)
    try:
        if "tuple" in kind:
            return tuple(s.strip() for s in text.split(",") if s.strip())
        if text.lower() in ("", "none") and "None" in kind:
            return None
        if "bool" in kind:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {f.name}: {raw!r}") from None
    return text


def stage_seed(master: int, stage: str) -> int:
    """Sub-seed for one stage; independent of which other stages run."""
    h = hashlib.sha256(f"{int(master)}:{stage}".encode()).digest()
    return int.from_bytes(h[:8], "little")


# -- windows and regions -----------------------------------------------------

def iter_windows(x: StsMatrix, plan: str) -> Iterator[tuple[str, StsMatrix]]:
    if plan == "whole":
        yield "whole", x
        return
    unit = {"yearly": "Y", "monthly": "M"}.get(plan)
    if unit is None:
        raise ConfigError(f"unknown window plan {plan!r}")
    periods = x.time_index.astype(f"datetime64[{unit}]")
    for value in np.unique(periods):
        yield str(value), x.take_rows(np.flatnonzero(periods == value))


def region_plan(x: StsMatrix, plan: str) -> list[tuple[str, set | None]]:
    zones = sorted({g.zone for g in x.columns})
    per_zone = [(f"zone{z}", {z}) for z in zones]
    if plan == "all":
        return [("all", None)]
    if plan == "per-zone":
        return per_zone
    if plan == "both":
        return [("all", None)] + per_zone
    raise ConfigError(f"unknown region plan {plan!r}")


def association(x: StsMatrix, method: str, jobs: int = 1) -> AssociationMatrix:
    if method == "pearson":
        return pearson_matrix(x)
    if method == "bergsma":
        return bergsma_matrix(x, jobs=jobs)
    raise ConfigError(f"unknown association method {method!r}")


def sb_series(s: StsMatrix, windows: str = "yearly", regions: str = "all", method: str = "bergsma",
              schemes: Sequence[str] = ("lag1",), rule: str = "rook", theta: float = 1.0,
              jobs: int = 1) -> tuple[pd.DataFrame, list[str]]:
    """Spatial Bergsma statistic for every (window, region, scheme).

    Windows with fewer than four time points are skipped; their labels
    are returned alongside the table.
    """
    rows, skipped = [], []
    weights = {}
    for wlabel, xw in iter_windows(s, windows):
        if xw.n < 4:
            skipped.append(wlabel)
            continue
        for rlabel, zones in region_plan(s, regions):
            xr = slice_window(xw, None, zones) if zones else xw
            a = association(xr, method, jobs)
            for scheme in schemes:
                key = (rlabel, scheme)
                if key not in weights:
                    weights[key] = make_weights(list(xr.columns), scheme, rule, theta)
                rows.append((wlabel, rlabel, weights[key].scheme, method, spatial_bergsma(a, weights[key])))
    return pd.DataFrame(rows, columns=SB_COLUMNS), skipped


def argmax_partner_offsets(assoc: AssociationMatrix, grids: Sequence[GridMeta],
                           step: float | None = None) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Most-associated partner of every grid and the spread of their offsets.

    Returns the per-grid table ``g1, g2, dlat, dlon`` and a histogram
    ``axis, offset, count`` with offsets in grid steps.
    """
    m = np.asarray(assoc.m, dtype=float)
    p = m.shape[0]
    if p < 2 or len(grids) != p:
        raise DataError("need at least two grids matching the association matrix")
    ids = [g.grid_id for g in grids]
    id_rank = np.argsort(np.argsort(ids, kind="stable"), kind="stable")
    rows = []
    for i in range(p):
        cand = [j for j in range(p) if j != i]
        best = max(cand, key=lambda j: (m[i, j], -id_rank[j]))
        rows.append((ids[i], ids[best], grids[best].lat - grids[i].lat, grids[best].lon - grids[i].lon))
    pairs = pd.DataFrame(rows, columns=["g1", "g2", "dlat", "dlon"])
    if step is None:
        lats = np.unique([g.lat for g in grids])
        lons = np.unique([g.lon for g in grids])
        diffs = np.concatenate([np.diff(lats), np.diff(lons)])
        step = float(diffs[diffs > 0].min()) if np.any(diffs > 0) else 1.0
    hist = []
    for axis in ("dlat", "dlon"):
        steps = np.rint(pairs[axis].to_numpy() / step).astype(int)
        vals, counts = np.unique(steps, return_counts=True)
        hist.extend((axis, int(v), int(c)) for v, c in zip(vals, counts))
    return pairs, pd.DataFrame(hist, columns=["axis", "offset", "count"])


# -- teleconnections ---------------------------------------------------------

def _norm_phase(label: str) -> str:
    key = str(label).strip().lower().replace("ñ", "n")
    for ch in " _-":
        key = key.replace(ch, "")
    if key not in ENSO_PHASES:
        raise DataError(f"unknown ENSO phase {label!r}; expected one of {ENSO_PHASES}")
    return key


def load_enso(path) -> dict[int, str]:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(df.columns[:2]) != ["year", "phase"]:
        raise DataError(f"{path}: header must be year,phase")
    return {int(y): _norm_phase(ph) for y, ph in zip(df["year"], df["phase"])}


def load_dmi(path) -> pd.Series:
    df = pd.read_csv(path)
    if list(df.columns[:3]) != ["year", "month", "dmi"]:
        raise DataError(f"{path}: header must be year,month,dmi")
    idx = (df["year"].astype(int) - 1970) * 12 + df["month"].astype(int) - 1
    return pd.Series(df["dmi"].astype(float).to_numpy(), index=idx.to_numpy(), name="dmi")


def teleconnect_enso(sb: pd.DataFrame, phases: dict) -> pd.DataFrame:
    """Summaries of yearly S_B grouped by ENSO phase."""
    phases = {int(y): _norm_phase(ph) for y, ph in phases.items()}
    years = sb["window"].astype(str).str.slice(0, 4).astype(int)
    missing = sorted(set(years) - set(phases))
    if missing:
        raise DataError(f"year {missing[0]} has no ENSO phase")
    frame = sb.assign(phase=[phases[y] for y in years])
    rows = []
    for (region, scheme, method, phase), grp in frame.groupby(["region", "scheme", "method", "phase"], sort=True):
        v = grp["value"].to_numpy(dtype=float)
        rows.append((region, scheme, method, phase, v.size, v.mean(),
                     v.std(ddof=1) if v.size > 1 else float("nan"), v.min(), v.max()))
    return pd.DataFrame(rows, columns=["region", "scheme", "method", "phase", "count", "mean", "sd", "min", "max"])


def _month_ordinal(labels) -> np.ndarray:
    return np.array([np.datetime64(str(s), "M").astype(int) for s in labels])


def teleconnect_iod(sb: pd.DataFrame, dmi: pd.Series, max_lag: int = 6) -> pd.DataFrame:
    """Pearson correlation of monthly S_B with DMI lagged by 0..max_lag months."""
    rows = []
    for (region, scheme, method), grp in sb.groupby(["region", "scheme", "method"], sort=True):
        months = _month_ordinal(grp["window"])
        values = grp["value"].to_numpy(dtype=float)
        for lag in range(max_lag + 1):
            src = months - lag
            ok = np.isin(src, dmi.index.to_numpy())
            if ok.sum() < 3:
                raise InsufficientDataError(
                    f"region {region}, lag {lag}: only {int(ok.sum())} overlapping months")
            a = values[ok]
            b = dmi.loc[src[ok]].to_numpy(dtype=float)
            r = float(np.corrcoef(a, b)[0, 1]) if a.std() > 0 and b.std() > 0 else float("nan")
            rows.append((region, scheme, method, lag, int(ok.sum()), r))
    return pd.DataFrame(rows, columns=["region", "scheme", "method", "lag", "n", "correlation"])


# -- end-to-end --------------------------------------------------------------

class _Writer:
    """Writes outputs and records them for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}

    def path(self, name: str, stage: str) -> Path:
        self.files[name] = stage
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def entries(self) -> list[dict]:
        out = []
        for name in sorted(self.files):
            p = self.out / name
            out.append({"file": name, "stage": self.files[name], "bytes": p.stat().st_size,
                        "sha256": digest(p)})
        return out


def load_input(cfg: RunConfig) -> StsMatrix:
    grids = load_grids(cfg.grids)
    loaded = load_series(cfg.series, grids, cfg.missing_token)
    x = compute_dtr(*loaded) if isinstance(loaded, tuple) else loaded
    if cfg.complete_only:
        x = filter_complete(x)
    if cfg.aggregate != "none":
        x = aggregate(x, cfg.aggregate, cfg.min_coverage)
    return x


def _trim(d: StsMatrix, cfg: RunConfig, seed_label: str):
    if cfg.depth is not None:
        return trim_to_depth(d, cfg.depth), None
    null = sv_null_thresholds(d, cfg.n_perm, cfg.quantile, stage_seed(cfg.seed, seed_label), cfg.jobs)
    return algorithm1(d, cfg.acf_threshold, cfg.acf_lags, null), null


def _denoised(r: AssociationMatrix, n: int, rescale: bool):
    e = eig_sym(r.m)
    k = significant_eigs(e, mp_bounds(r.p, n, allow_wide=True))
    out = mp_denoise(r, k, e)
    return (rescale_diagonal(out) if rescale else out), k


def run(cfg: RunConfig) -> dict:
    """Execute the configured plan and write ``manifest.json``; returns the manifest."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    w = _Writer(out)
    report: dict = {"stages": [], "skipped_windows": [], "eigen_counts": {}}
    stage = "ingest"
    try:
        x = load_input(cfg)
        report["n"], report["p"] = x.n, x.p
        report["negative_dtr"] = int(x.meta.get("negative_dtr", 0))
        report["stages"].append(stage)

        stage = "order"
        order = make_order(list(x.columns), cfg.order, cfg.stratify, cfg.hilbert_bits)
        d = apply_order(x, order)
        grids = list(d.columns)
        write_frame(order_table(list(x.columns), order), w.path("order.csv", stage))
        write_sts_csv(d, w.path("D.csv", stage), cfg.missing_token)
        report["stages"].append(stage)

        if cfg.compare:
            stage = "classical"
            t = classical_detrend(d)
            write_sts_csv(t, w.path("T.csv", stage), cfg.missing_token)
            for name, mat in (("D", d), ("T", t)):
                r = pearson_matrix(mat)
                rhat, k = _denoised(r, mat.n, cfg.rescale_diagonal)
                report["eigen_counts"][f"R_{name}"] = k
                write_assoc_csv(r, w.path(f"R_{name}.csv", stage))
                write_assoc_csv(rhat, w.path(f"Rhat_{name}.csv", stage))
            report["stages"].append(stage)

        stage = "trim"
        tr, null = _trim(d, cfg, "trim")
        s = tr.trimmed
        write_sts_csv(s, w.path("S.csv", stage), cfg.missing_token)
        trim_info = tr.report()
        if null is not None:
            trim_info["null_thresholds"] = [float(v) for v in null.thresholds]
            trim_info["n_perm"] = null.n_perm
            trim_info["quantile"] = null.quantile
        left, right = tr.components_frame(s.grid_ids)
        write_frame(left, w.path("removed_left.csv", stage))
        write_frame(right, w.path("removed_right.csv", stage))
        if cfg.gsvd_perm:
            g = gsvd_retention_check(d, s, cfg.gsvd_perm, stage_seed(cfg.seed, "gsvd"))
            write_frame(g, w.path("gsvd.csv", stage))
            trim_info["gsvd_fraction_inside"] = g.attrs["fraction_inside"]
        write_json(trim_info, w.path("trim.json", stage))
        report["depth_d"] = tr.depth_d
        report["stages"].append(stage)

        stage = "association"
        esd_windows, esd_n = [], []
        if "pearson" in cfg.methods:
            r = pearson_matrix(s)
            rhat, k = _denoised(r, s.n, cfg.rescale_diagonal)
            report["eigen_counts"]["R_S"] = k
            write_assoc_csv(r, w.path("R_S.csv", stage))
            write_assoc_csv(rhat, w.path("Rhat_S.csv", stage))
            esd_windows.append(r)
            esd_n.append(s.n)
            if cfg.partners:
                pairs, hist = argmax_partner_offsets(r, grids)
                write_frame(pairs, w.path("partners.csv", stage))
                write_frame(hist, w.path("partners_hist.csv", stage))
        if "bergsma" in cfg.methods and cfg.windows == "whole":
            b = bergsma_matrix(s, jobs=cfg.jobs)
            write_assoc_csv(b, w.path("B_S.csv", stage))
        report["stages"].append(stage)

        stage = "windows"
        sb_frames = []
        if cfg.windows != "whole" or "bergsma" in cfg.methods:
            for wlabel, dw in iter_windows(d if cfg.trim_scope == "per-window" else s, cfg.windows):
                if dw.n < 4:
                    report["skipped_windows"].append(wlabel)
                    continue
                if cfg.trim_scope == "per-window":
                    sw = _trim(dw, cfg, f"trim:{wlabel}")[0].trimmed
                else:
                    sw = dw
                if "pearson" in cfg.methods and cfg.windows != "whole":
                    r = pearson_matrix(sw)
                    r.window = wlabel
                    esd_windows.append(r)
                    esd_n.append(sw.n)
                if "bergsma" in cfg.methods:
                    frame, _ = sb_series(sw, "whole", cfg.regions, "bergsma", cfg.schemes,
                                         cfg.adjacency, cfg.theta, cfg.jobs)
                    sb_frames.append(frame.assign(window=wlabel))
        if esd_windows:
            esd = esd_series(esd_windows, esd_n)
            write_frame(esd[ESD_COLUMNS], w.path("esd.csv", stage))
        sb = pd.DataFrame(columns=SB_COLUMNS)
        if sb_frames:
            sb = pd.concat(sb_frames, ignore_index=True)[SB_COLUMNS]
            write_frame(sb, w.path("sb_series.csv", stage))
        report["stages"].append(stage)

        stage = "teleconnect"
        if cfg.enso and not sb.empty and cfg.windows == "yearly":
            write_frame(teleconnect_enso(sb, load_enso(cfg.enso)), w.path("enso.csv", stage))
        if cfg.dmi and not sb.empty and cfg.windows == "monthly":
            write_frame(teleconnect_iod(sb, load_dmi(cfg.dmi), cfg.max_lag), w.path("iod.csv", stage))
        report["stages"].append(stage)

        if cfg.figures:
            stage = "figures"
            from .plotting import render_outputs
            for name in render_outputs(out, sorted(w.files), cfg.figure_format):
                w.path(name, stage)
            report["stages"].append(stage)
    except CoreAssocError as exc:
        manifest = _manifest(cfg, w, report, status="failed", failed_stage=stage, error=str(exc))
        write_json(manifest, out / "manifest.json")
        raise type(exc)(f"stage {stage}: {exc}") from exc

    manifest = _manifest(cfg, w, report, status="ok")
    write_json(manifest, out / "manifest.json")
    return manifest


def _manifest(cfg: RunConfig, w: _Writer, report: dict, **status) -> dict:
    config = cfg.to_dict()
    for name in ("grids", "series", "enso", "dmi", "out"):
        if config[name]:
            config[name] = Path(config[name]).name
    inputs = {name: digest(getattr(cfg, name)) for name in ("grids", "series", "enso", "dmi")
              if getattr(cfg, name) and Path(getattr(cfg, name)).is_file()}
    return {"version": __version__, "config": config, "inputs": inputs, "report": report,
            "outputs": w.entries(), **status}
