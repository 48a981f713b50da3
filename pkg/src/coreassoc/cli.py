"""Command-line interface.

Every subcommand accepts ``--config`` (an INI file whose ``[run]``
section mirrors :class:`~coreassoc.pipeline.RunConfig`), ``--seed``,
``--jobs`` and ``--out``; explicit flags win over the config file.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .dependence import bergsma_matrix, make_weights, spatial_bergsma
from .errors import ConfigError, CoreAssocError, DataError
from .ingest import load_grids, read_sts_csv, write_sts_csv
from .linalg import pearson_matrix
from .ordering import apply_order, make_order, order_table
from .pipeline import (SB_COLUMNS, RunConfig, _denoised, _trim, load_dmi, load_enso, load_input,
                       run, sb_series, teleconnect_enso, teleconnect_iod)
from .rmt import ESD_COLUMNS, esd_series, mp_denoise, rescale_diagonal
from .tables import digest, read_assoc_csv, write_assoc_csv, write_frame, write_json
from .trim import gsvd_retention_check

log = logging.getLogger("coreassoc")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global")
    g.add_argument("--config", help="INI file with a [run] section")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int)
    g.add_argument("--out", help="output directory")
    g.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="coreassoc", description="Core spatial association of gridded time series.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    p = add("ingest", "build the DTR matrix X from grid metadata and long-form series")
    p.add_argument("--grids")
    p.add_argument("--series")
    p.add_argument("--missing-token")
    p.add_argument("--all-columns", action="store_true", help="keep columns with missing values")
    p.add_argument("--aggregate", choices=["none", "monthly", "yearly"])
    p.add_argument("--min-coverage", type=float)

    p = add("order", "spatial ordering of the grids (and of X's columns)")
    p.add_argument("--grids")
    p.add_argument("--x", help="wide matrix CSV to reorder into D")
    p.add_argument("--method", choices=["spiral", "hilbert", "identity"])
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--bits", type=int)

    p = add("trim", "permutation null + ACF-driven SVD trimming of D")
    p.add_argument("--grids")
    p.add_argument("--x", required=True, help="D as wide CSV")
    p.add_argument("--n-perm", type=int)
    p.add_argument("--quantile", type=float)
    p.add_argument("--acf-threshold", type=float)
    p.add_argument("--acf-lags", type=int)
    p.add_argument("--depth", type=int, help="fixed depth, skips the null")
    p.add_argument("--gsvd-perm", type=int)

    for name, help in (("corr", "association matrix of a wide matrix CSV"),
                       ("bergsma", "pairwise Bergsma correlation matrix")):
        p = add(name, help)
        p.add_argument("--grids")
        p.add_argument("--x", required=True)
        if name == "corr":
            p.add_argument("--method", choices=["pearson", "bergsma"], default="pearson")
        p.add_argument("--name", help="output file name")

    p = add("denoise", "keep the top-k eigen terms of an association matrix")
    p.add_argument("--r", required=True)
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--k", type=int)
    grp.add_argument("--n", type=int, help="time points; k = count above the MP edge")
    p.add_argument("--rescale-diagonal", action="store_true")
    p.add_argument("--name")

    p = add("esd", "ESD quantile table of one or more association matrices")
    p.add_argument("--r", nargs="+", required=True)
    p.add_argument("--n", type=int, nargs="+", required=True, help="time points per matrix (one or one each)")

    p = add("sb", "Spatial Bergsma statistic(s)")
    p.add_argument("--grids")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--x", help="trimmed matrix S as wide CSV")
    src.add_argument("--assoc", help="precomputed association matrix CSV")
    p.add_argument("--windows", choices=["whole", "yearly", "monthly"])
    p.add_argument("--regions", choices=["all", "per-zone", "both"])
    p.add_argument("--method", choices=["pearson", "bergsma"], default="bergsma")
    p.add_argument("--schemes")
    p.add_argument("--adjacency", choices=["rook", "queen"])
    p.add_argument("--theta", type=float)

    p = add("teleconnect", "join an S_B series with ENSO phases or DMI")
    p.add_argument("--sb", required=True)
    p.add_argument("--enso")
    p.add_argument("--dmi")
    p.add_argument("--max-lag", type=int)

    p = add("run", "end-to-end pipeline")
    for key in ("grids", "series", "enso", "dmi", "order", "windows", "regions", "methods", "schemes",
                "trim-scope", "aggregate"):
        p.add_argument(f"--{key}")
    p.add_argument("--n-perm", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--figures", action="store_true", default=None)

    p = add("report", "render figures from a run's manifest")
    p.add_argument("--manifest", required=True, help="manifest.json or the run directory")
    p.add_argument("--format", choices=["png", "svg"], default="png")
    return parser


def _config(args, check_files=False) -> RunConfig:
    overrides = {}
    for key in ("seed", "jobs", "out", "grids", "series", "enso", "dmi", "order", "windows", "regions",
                "methods", "schemes", "trim_scope", "aggregate", "n_perm", "depth", "figures",
                "missing_token", "min_coverage", "quantile", "acf_threshold", "acf_lags", "gsvd_perm",
                "adjacency", "theta", "max_lag"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if getattr(args, "all_columns", False):
        overrides["complete_only"] = False
    if args.command == "order":
        if args.method:
            overrides["order"] = args.method
        if args.no_stratify:
            overrides["stratify"] = False
        if args.bits:
            overrides["hilbert_bits"] = args.bits
    if args.config:
        cfg = RunConfig.from_ini(args.config, **overrides)
    else:
        cfg = RunConfig.from_mapping(overrides)
    if check_files:
        cfg.validate()
    return cfg


def _out(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grids(cfg):
    return load_grids(cfg.grids) if cfg.grids else None


def _need(cfg, *names):
    for name in names:
        if not getattr(cfg, name):
            raise ConfigError(f"--{name} is required")


def cmd_ingest(args, cfg):
    _need(cfg, "grids", "series")
    x = load_input(cfg)
    path = _out(cfg) / "X.csv"
    write_sts_csv(x, path, cfg.missing_token)
    print(f"X: {x.n} x {x.p} -> {path}")


def cmd_order(args, cfg):
    _need(cfg, "grids")
    grids = load_grids(cfg.grids)
    if args.x:
        x = read_sts_csv(args.x, grids, missing_token=cfg.missing_token)
        grids = list(x.columns)
    order = make_order(grids, cfg.order, cfg.stratify, cfg.hilbert_bits)
    out = _out(cfg)
    write_frame(order_table(grids, order), out / "order.csv")
    if args.x:
        write_sts_csv(apply_order(x, order), out / "D.csv", cfg.missing_token)
    print(f"{order.method} order of {len(order)} grids -> {out}")


def cmd_trim(args, cfg):
    d = read_sts_csv(args.x, _grids(cfg), "D", cfg.missing_token)
    if cfg.depth is None and cfg.seed is None:
        raise ConfigError("--seed is required unless --depth is given")
    tr, null = _trim(d, cfg, "trim")
    out = _out(cfg)
    write_sts_csv(tr.trimmed, out / "S.csv", cfg.missing_token)
    info = tr.report()
    if null is not None:
        info["null_thresholds"] = [float(v) for v in null.thresholds]
    if cfg.gsvd_perm:
        from .pipeline import stage_seed
        g = gsvd_retention_check(d, tr.trimmed, cfg.gsvd_perm, stage_seed(cfg.seed, "gsvd"))
        write_frame(g, out / "gsvd.csv")
        info["gsvd_fraction_inside"] = g.attrs["fraction_inside"]
    left, right = tr.components_frame(tr.trimmed.grid_ids)
    write_frame(left, out / "removed_left.csv")
    write_frame(right, out / "removed_right.csv")
    write_json(info, out / "trim.json")
    print(f"depth {tr.depth_d} of {tr.significant_s} significant; "
          f"SV share removed {tr.sv_share_removed:.3f}; criterion met: {tr.criterion_met}")


def cmd_corr(args, cfg, method=None):
    method = method or args.method
    x = read_sts_csv(args.x, _grids(cfg), missing_token=cfg.missing_token)
    a = pearson_matrix(x) if method == "pearson" else bergsma_matrix(x, jobs=cfg.jobs)
    path = _out(cfg) / (args.name or ("R.csv" if method == "pearson" else "B.csv"))
    write_assoc_csv(a, path)
    print(f"{method} {a.p} x {a.p} -> {path}")


def cmd_denoise(args, cfg):
    r = read_assoc_csv(args.r)
    if args.k is not None:
        out = mp_denoise(r, args.k)
        if args.rescale_diagonal:
            out = rescale_diagonal(out)
        k = args.k
    else:
        out, k = _denoised(r, args.n, args.rescale_diagonal)
    path = _out(cfg) / (args.name or "Rhat.csv")
    write_assoc_csv(out, path)
    print(f"kept {k} eigen terms -> {path}")


def cmd_esd(args, cfg):
    mats = []
    for path in args.r:
        a = read_assoc_csv(path)
        a.window = Path(path).stem
        mats.append(a)
    ns = args.n[0] if len(args.n) == 1 else args.n
    table = esd_series(mats, ns)
    path = _out(cfg) / "esd.csv"
    write_frame(table[ESD_COLUMNS], path)
    print(table[ESD_COLUMNS].to_string(index=False))


def cmd_sb(args, cfg):
    _need(cfg, "grids")
    grids = load_grids(cfg.grids)
    out = _out(cfg)
    if args.assoc:
        a = read_assoc_csv(args.assoc, args.method)
        lookup = {g.grid_id: g for g in grids}
        unknown = [g for g in a.grid_ids if g not in lookup]
        if unknown:
            raise DataError(f"grid {unknown[0]!r} is not in {cfg.grids}")
        cols = [lookup[g] for g in a.grid_ids]
        rows = [("whole", "all", make_weights(cols, s, cfg.adjacency, cfg.theta).scheme, args.method,
                 spatial_bergsma(a, make_weights(cols, s, cfg.adjacency, cfg.theta)))
                for s in cfg.schemes]
        table = pd.DataFrame(rows, columns=SB_COLUMNS)
    else:
        x = read_sts_csv(args.x, grids, "S", cfg.missing_token)
        table, skipped = sb_series(x, cfg.windows, cfg.regions, args.method, cfg.schemes,
                                   cfg.adjacency, cfg.theta, cfg.jobs)
        if skipped:
            log.warning("skipped %d short windows: %s", len(skipped), ", ".join(skipped))
    write_frame(table, out / "sb_series.csv")
    print(table.to_string(index=False))


def cmd_teleconnect(args, cfg):
    sb = pd.read_csv(args.sb, dtype={"window": str})
    if not (cfg.enso or cfg.dmi):
        raise ConfigError("give --enso and/or --dmi")
    out = _out(cfg)
    if cfg.enso:
        t = teleconnect_enso(sb, load_enso(cfg.enso))
        write_frame(t, out / "enso.csv")
        print(t.to_string(index=False))
    if cfg.dmi:
        t = teleconnect_iod(sb, load_dmi(cfg.dmi), cfg.max_lag)
        write_frame(t, out / "iod.csv")
        print(t.to_string(index=False))


def cmd_run(args, cfg):
    manifest = run(cfg.validate())
    print(f"{len(manifest['outputs'])} outputs -> {Path(cfg.out) / 'manifest.json'}")


def cmd_report(args, cfg):
    from .plotting import render_outputs
    path = Path(args.manifest)
    if path.is_dir():
        path = path / "manifest.json"
    manifest = json.loads(path.read_text())
    base = path.parent
    files = [e["file"] for e in manifest["outputs"] if not e["file"].startswith("figures/")]
    figures = render_outputs(base, files, args.format)
    keep = [e for e in manifest["outputs"] if e["file"] not in figures]
    for name in figures:
        p = base / name
        keep.append({"file": name, "stage": "figures", "bytes": p.stat().st_size, "sha256": digest(p)})
    manifest["outputs"] = sorted(keep, key=lambda e: e["file"])
    write_json(manifest, path)
    for name in figures:
        print(base / name)


COMMANDS = {
    "ingest": cmd_ingest, "order": cmd_order, "trim": cmd_trim, "corr": cmd_corr,
    "bergsma": lambda a, c: cmd_corr(a, c, "bergsma"), "denoise": cmd_denoise, "esd": cmd_esd,
    "sb": cmd_sb, "teleconnect": cmd_teleconnect, "run": cmd_run, "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except CoreAssocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
