"""Command-line driver: tune-r, tune-alpha, tune-k, cluster, predict, stability, report, synth, pipeline.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, svg
from .biocluster import cluster
from .bioprovince import ProvinceMap, predict
from .config import RunConfig, load_config, validate
from .data import load_grid, load_group_map, load_samples, SampleMeta
from .distance import bio_distance_matrix, mix_distance_matrix, spatial_distance_matrix
from .errors import BioprovinceError, ConfigError, DataError, NumericalError
from .report import SyntheticSpec, cross_tabulate, generate_synthetic, mean_cluster_composition
from .stability import PipelineParams, cluster_source_homogeneity, run_stability
from .tuning import alpha_saturation_curve, cruise_pairs, k_elbow_curve, tune_r

logger = logging.getLogger("bioprovince")


def threads_from_env() -> int:
    raw = os.environ.get("BIOPROVINCE_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"BIOPROVINCE_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("BIOPROVINCE_THREADS must be at least 1")
    return n


@contextmanager
def stage(name: str):
    try:
        yield
    except BioprovinceError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        raise NumericalError(f"[{name}] {exc}") from exc


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _external_labels(meta: SampleMeta, path) -> SampleMeta:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(df.columns[:2]) != ["sample_id", "external_province"]:
        raise DataError("external labels CSV must have header sample_id,external_province")
    lookup = dict(zip(df["sample_id"], df["external_province"]))
    ext = [lookup.get(s) or None for s in meta.sample_ids]
    return SampleMeta(meta.sample_ids, meta.latitude, meta.depth, meta.temperature, meta.salinity, meta.cruise, ext)


def load_inputs(cfg: RunConfig, need_grid: bool = False):
    with stage("load"):
        table, meta = load_samples(cfg.composition, cfg.meta, cfg.zero_policy, cfg.input_kind)
        if cfg.external_labels:
            meta = _external_labels(meta, cfg.external_labels)
        grid = load_grid(cfg.grid) if need_grid else None
    return table, meta, grid


def _read_memberships(path, meta: SampleMeta) -> np.ndarray:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if "sample_id" not in df.columns or "cluster" not in df.columns:
        raise DataError("memberships CSV needs sample_id and cluster columns")
    lookup = dict(zip(df["sample_id"], df["cluster"]))
    missing = [s for s in meta.sample_ids if s not in lookup]
    if missing:
        raise DataError(f"no membership for sample {missing[0]}")
    try:
        return np.array([int(lookup[s]) for s in meta.sample_ids])
    except ValueError:
        raise DataError("memberships must be integers") from None


# writers -------------------------------------------------------------------


def write_memberships(out: Path, meta: SampleMeta, memberships) -> list[str]:
    write_csv(
        out / "memberships.csv",
        ["sample_id", "latitude", "depth", "cluster"],
        zip(meta.sample_ids, meta.latitude, meta.depth, memberships),
    )
    return ["memberships.csv"]


def write_provinces(out: Path, grid, pmap: ProvinceMap, meta=None, memberships=None) -> list[str]:
    write_csv(
        out / "provinces.csv",
        ["grid_id", "latitude", "depth", "membership", "k_prime", "tie_broken", "fallback_used"],
        zip(grid.grid_ids, grid.latitude, grid.depth, pmap.memberships, pmap.k_prime, pmap.tie_broken, pmap.fallback_used),
    )
    extra = {}
    if meta is not None and memberships is not None:
        extra = dict(sample_lat=meta.latitude, sample_depth=meta.depth, sample_labels=memberships)
    write_text(out / "provinces.svg", svg.province_raster(grid.latitude, grid.depth, pmap.memberships, **extra))
    return ["provinces.csv", "provinces.svg"]


def write_reports(out: Path, table, meta: SampleMeta, memberships, group_map=None) -> list[str]:
    written = []
    if any(e is not None for e in meta.external_province):
        ct = cross_tabulate(memberships, meta.external_province, meta)
        write_csv(
            out / "crosstab.csv",
            ["external_province"] + [str(c) for c in ct.col_labels],
            ([r] + list(row) for r, row in zip(ct.row_labels, ct.values)),
        )
        write_text(out / "crosstab.svg", svg.heatmap(ct.row_labels, ct.col_labels, ct.values))
        written += ["crosstab.csv", "crosstab.svg"]
    clusters, groups, values = mean_cluster_composition(table, memberships, group_map)
    write_csv(out / "mean_composition.csv", ["cluster"] + groups, ([c] + list(v) for c, v in zip(clusters, values)))
    write_text(out / "mean_composition.svg", svg.stacked_bars(clusters, groups, values))
    kl = cluster_source_homogeneity(memberships, meta.cruise)
    write_csv(out / "homogeneity.csv", ["cluster", "kl_divergence"], sorted(kl.items(), key=lambda kv: kv[1]))
    return written + ["mean_composition.csv", "mean_composition.svg", "homogeneity.csv"]


# commands ------------------------------------------------------------------


def cmd_tune_r(cfg: RunConfig):
    validate(cfg, files=("composition", "meta"))
    table, meta, _ = load_inputs(cfg)
    if not any(c.strip() for c in meta.cruise):
        raise DataError("cruise column is empty")
    with stage("tune-r"):
        d_bio = bio_distance_matrix(table)
        res = tune_r(table, meta, cfg.lat_window, cfg.depth_window, cfg.p_threshold, cfg.weights, d_bio=d_bio)
    out = _out_dir(cfg)
    rows = []
    panels = []
    cruises = np.asarray(meta.cruise)
    for c, f in res.per_cruise_fits.items():
        for dim, fit, n_pairs in (("latitude", f.lat_fit, f.n_pairs_lat), ("depth", f.depth_fit, f.n_pairs_depth)):
            used = fit is not None and fit.slope > 0 and fit.p_value < cfg.p_threshold
            if fit is None:
                rows.append([c, dim, "", "", "", "", "", n_pairs, used])
            else:
                rows.append([c, dim, fit.slope, fit.intercept, fit.slope_std_err, fit.t_stat, fit.p_value, n_pairs, used])
        idx = np.flatnonzero(cruises == c)
        y, dlat, ddep = cruise_pairs(d_bio[np.ix_(idx, idx)], meta.latitude[idx], meta.depth[idx], cfg.lat_window, cfg.depth_window)
        for dim, x, fit in (("depth", ddep, f.depth_fit), ("latitude", dlat, f.lat_fit)):
            panels.append(
                {"x": x, "y": y, "name": f"{c}: {dim}",
                 "slope": None if fit is None else fit.slope, "intercept": None if fit is None else fit.intercept}
            )
    write_csv(
        out / "r_regressions.csv",
        ["cruise", "dimension", "slope", "intercept", "slope_std_err", "t_stat", "p_value", "n_pairs", "used"],
        rows,
    )
    write_text(out / "r_tuning.svg", svg.scatter_fits(panels, "Distance decay per cruise"))
    summary = {"b1": res.b1, "b2": res.b2, "r": res.r, "lat_window": cfg.lat_window, "depth_window": cfg.depth_window}
    write_text(out / "r_tuning.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"suggested r = {res.r:.6g} (b1 = {res.b1:.6g} per degree, b2 = {res.b2:.6g} per metre)")
    return res


def cmd_tune_alpha(cfg: RunConfig):
    validate(cfg, need=("r",), files=("composition", "meta"))
    table, meta, _ = load_inputs(cfg)
    with stage("tune-alpha"):
        curve = alpha_saturation_curve(table, meta, cfg.r, cfg.alphas, cfg.L, cfg.seed)
    out = _out_dir(cfg)
    rows = [
        [a, rep, curve.scores[i, rep], curve.null_scores[i, rep]]
        for i, a in enumerate(curve.alphas)
        for rep in range(curve.scores.shape[1])
    ]
    write_csv(out / "alpha_curve.csv", ["alpha", "replicate", "score", "null_score"], rows)
    q = lambda m, p: np.quantile(m, p, axis=1)  # noqa: E731
    write_text(
        out / "alpha_curve.svg",
        svg.line_plot(
            [(curve.alphas, np.median(curve.scores, axis=1), "score"),
             (curve.alphas, np.median(curve.null_scores, axis=1), "null score")],
            "alpha", "fraction inside corner hull", "Spatial saturation",
            bands=[(curve.alphas, q(curve.scores, 0.025), q(curve.scores, 0.975), "score"),
                   (curve.alphas, q(curve.null_scores, 0.025), q(curve.null_scores, 0.975), "null")],
            marker_x=curve.suggested_alpha,
        ),
    )
    print(f"suggested alpha = {curve.suggested_alpha:g} (review alpha_curve.svg before use)")
    return curve


def _d_alpha(cfg, table, meta):
    with stage("distance"):
        return mix_distance_matrix(bio_distance_matrix(table), spatial_distance_matrix(meta, cfg.r), cfg.alpha)


def cmd_tune_k(cfg: RunConfig):
    validate(cfg, need=("r", "alpha"), files=("composition", "meta"))
    table, meta, _ = load_inputs(cfg)
    d_alpha = _d_alpha(cfg, table, meta)
    with stage("tune-k"):
        ks = [k for k in cfg.Ks if k <= len(meta)]
        curve = k_elbow_curve(d_alpha, ks)
    out = _out_dir(cfg)
    write_csv(out / "k_curve.csv", ["K", "wcd"], zip(curve.Ks, curve.wcd))
    write_text(
        out / "k_curve.svg",
        svg.line_plot([(curve.Ks, curve.wcd, "within-cluster distance")], "K", "within-cluster distance",
                      "Elbow curve", marker_x=curve.suggested_K),
    )
    print(f"suggested K = {curve.suggested_K} (review k_curve.svg before use)")
    return curve


def cmd_cluster(cfg: RunConfig):
    validate(cfg, need=("r", "alpha", "K"), files=("composition", "meta"))
    table, meta, _ = load_inputs(cfg)
    d_alpha = _d_alpha(cfg, table, meta)
    with stage("cluster"):
        res = cluster(d_alpha, cfg.K, latitude=meta.latitude)
    out = _out_dir(cfg)
    write_memberships(out, meta, res.memberships)
    write_csv(
        out / "merge_history.csv",
        ["step", "left", "right", "height", "size"],
        ([t, int(h[0]), int(h[1]), float(h[2]), int(h[3])] for t, h in enumerate(res.merge_history)),
    )
    return res


def cmd_predict(cfg: RunConfig):
    validate(cfg, need=("r", "k"), files=("meta", "grid", "memberships"))
    with stage("load"):
        meta = _meta_only(cfg.meta)
        grid = load_grid(cfg.grid)
        memberships = _read_memberships(cfg.memberships, meta)
    with stage("predict"):
        pmap = predict(grid, meta, memberships, cfg.k, cfg.r, cfg.rescale_domain, threads=threads_from_env())
    write_provinces(_out_dir(cfg), grid, pmap, meta, memberships)
    return pmap


def _meta_only(path) -> SampleMeta:
    from .data import META_COLUMNS

    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in META_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"meta CSV missing column(s): {', '.join(missing)}")
    try:
        num = {c: df[c].astype(float).to_numpy() for c in ("latitude", "depth", "temperature", "salinity")}
    except ValueError:
        raise DataError("non-numeric value in meta CSV") from None
    ext = [v or None for v in df["external_province"]] if "external_province" in df.columns else None
    return SampleMeta(list(df["sample_id"]), cruise=list(df["cruise"]), external_province=ext, **num)


def cmd_stability(cfg: RunConfig):
    validate(cfg, need=("r", "alpha", "K", "k"), files=("composition", "meta", "grid"))
    table, meta, grid = load_inputs(cfg, need_grid=True)
    params = PipelineParams(cfg.r, cfg.alpha, cfg.K, cfg.k)
    with stage("stability"):
        smap = run_stability(table, meta, grid, params, cfg.fraction, cfg.replicates, cfg.seed, threads=threads_from_env())
    out = _out_dir(cfg)
    write_csv(
        out / "stability.csv",
        ["grid_id", "latitude", "depth", "modal_cluster", "stability"],
        zip(grid.grid_ids, grid.latitude, grid.depth, smap.modal_cluster, smap.stability),
    )
    write_text(
        out / "stability.svg",
        svg.province_raster(grid.latitude, grid.depth, smap.modal_cluster, "Province stability", opacity=smap.stability),
    )
    return smap


def cmd_report(cfg: RunConfig):
    validate(cfg, files=("composition", "meta", "memberships"))
    table, meta, _ = load_inputs(cfg)
    with stage("report"):
        memberships = _read_memberships(cfg.memberships, meta)
        group_map = load_group_map(cfg.group_map) if cfg.group_map else None
        write_reports(_out_dir(cfg), table, meta, memberships, group_map)


def cmd_synth(spec: SyntheticSpec, out: Path):
    data = generate_synthetic(spec)
    out.mkdir(parents=True, exist_ok=True)
    t, m, g = data.table, data.meta, data.grid
    write_csv(out / "composition.csv", ["sample_id"] + list(t.asv_ids), ([s] + list(v) for s, v in zip(t.sample_ids, t.values)))
    write_csv(
        out / "meta.csv",
        ["sample_id", "latitude", "depth", "temperature", "salinity", "cruise", "external_province"],
        zip(m.sample_ids, m.latitude, m.depth, m.temperature, m.salinity, m.cruise, (f"P{x}" for x in data.true_labels)),
    )
    write_csv(out / "grid.csv", ["grid_id", "latitude", "depth", "temperature", "salinity"],
              zip(g.grid_ids, g.latitude, g.depth, g.temperature, g.salinity))
    write_csv(out / "truth_samples.csv", ["sample_id", "province"], zip(m.sample_ids, data.true_labels))
    write_csv(out / "truth_grid.csv", ["grid_id", "province", "margin"], zip(g.grid_ids, data.grid_labels, data.grid_margin))
    return data


MANIFEST_KEYS = (
    "composition", "meta", "grid", "group_map", "external_labels", "r", "alpha", "K", "k",
    "zero_policy", "input_kind", "rescale_domain", "seed",
)


def cmd_pipeline(cfg: RunConfig, threads: int | None = None) -> dict:
    """Cluster, predict and report in one run, then write a manifest.

    The manifest records inputs with content hashes, every setting that
    affects the outputs, and the hash of each output file.
    """
    validate(cfg, need=("r", "alpha", "K", "k"), files=("composition", "meta", "grid"))
    threads = threads_from_env() if threads is None else threads
    table, meta, grid = load_inputs(cfg, need_grid=True)
    d_alpha = _d_alpha(cfg, table, meta)
    with stage("cluster"):
        res = cluster(d_alpha, cfg.K, latitude=meta.latitude)
    with stage("predict"):
        pmap = predict(grid, meta, res.memberships, cfg.k, cfg.r, cfg.rescale_domain, threads=threads)
    out = _out_dir(cfg)
    written = write_memberships(out, meta, res.memberships)
    written += write_provinces(out, grid, pmap, meta, res.memberships)
    with stage("report"):
        group_map = load_group_map(cfg.group_map) if cfg.group_map else None
        written += write_reports(out, table, meta, res.memberships, group_map)
    manifest = {
        "tool": "bioprovince",
        "version": __version__,
        "command": "pipeline",
        "config": {k: getattr(cfg, k) for k in MANIFEST_KEYS},
        "inputs": {
            name: sha256(getattr(cfg, name))
            for name in ("composition", "meta", "grid", "group_map", "external_labels")
            if getattr(cfg, name)
        },
        "outputs": {name: sha256(out / name) for name in sorted(written)},
    }
    write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def config_from_manifest(path, out=None) -> RunConfig:
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    cfg = RunConfig(**{k: v for k, v in manifest["config"].items() if v is not None})
    for name, digest in manifest.get("inputs", {}).items():
        p = getattr(cfg, name)
        if not p or not os.path.isfile(p):
            raise ConfigError(f"manifest input {name} not found: {p}")
        if sha256(p) != digest:
            raise DataError(f"manifest input {name} changed since the recorded run: {p}")
    if out is not None:
        cfg.out = out
    return cfg


# argument parsing ----------------------------------------------------------

CONFIG_FLAGS = [
    ("--composition", str), ("--meta", str), ("--grid", str), ("--group-map", str),
    ("--external-labels", str), ("--memberships", str), ("--r", float), ("--alpha", float),
    ("--K", int), ("--k", int), ("--zero-policy", str), ("--input-kind", str),
    ("--lat-window", float), ("--depth-window", float), ("--p-threshold", float),
    ("--weights", str), ("--L", int), ("--alphas", str), ("--Ks", str), ("--replicates", int),
    ("--fraction", float), ("--seed", int), ("--rescale-domain", str), ("--out", str),
]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file; flags take precedence")
    for flag, typ in CONFIG_FLAGS:
        p.add_argument(flag, type=typ, default=None, dest=flag[2:].replace("-", "_"))


SUBCOMMAND_HELP = {
    "tune-r": "fit distance-decay slopes per cruise and suggest r",
    "tune-alpha": "saturation scores against null scores over an alpha grid",
    "tune-k": "within-cluster distance for each candidate K",
    "cluster": "Ward clustering of the samples on the mixed distance",
    "predict": "k-NN province labels for every grid point",
    "stability": "per-grid-point stability under ASV subsampling",
    "report": "cross-tabulation and mean cluster compositions",
    "pipeline": "cluster, predict and report in one run, with a manifest",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bioprovince", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in SUBCOMMAND_HELP.items():
        p = sub.add_parser(name, help=text)
        _add_config_flags(p)
        if name == "pipeline":
            p.add_argument("--manifest", help="rerun the settings and inputs recorded in a manifest")
    p = sub.add_parser("synth", help="write a planted-province fixture")
    p.add_argument("--n-provinces", type=int, default=3)
    p.add_argument("--n-samples", type=int, default=150)
    p.add_argument("--n-asvs", type=int, default=300)
    p.add_argument("--noise", type=float, default=SyntheticSpec.noise)
    p.add_argument("--n-cruises", type=int, default=3)
    p.add_argument("--n-grid", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synthetic")
    return parser


COMMANDS = {
    "tune-r": cmd_tune_r,
    "tune-alpha": cmd_tune_alpha,
    "tune-k": cmd_tune_k,
    "cluster": cmd_cluster,
    "predict": cmd_predict,
    "stability": cmd_stability,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            spec = SyntheticSpec(
                n_provinces=args.n_provinces, n_samples=args.n_samples, n_asvs=args.n_asvs,
                noise=args.noise, seed=args.seed, n_cruises=args.n_cruises, n_grid=args.n_grid,
            )
            cmd_synth(spec, Path(args.out))
            return 0
        overrides = {flag[2:].replace("-", "_"): getattr(args, flag[2:].replace("-", "_")) for flag, _ in CONFIG_FLAGS}
        if args.command == "pipeline" and args.manifest:
            cfg = config_from_manifest(args.manifest, out=overrides.get("out"))
            cmd_pipeline(cfg)
            return 0
        cfg = load_config(args.config, overrides)
        if args.command == "pipeline":
            cmd_pipeline(cfg)
        else:
            COMMANDS[args.command](cfg)
    except BioprovinceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
