"""Acceptance criteria A1-A12, one test each.

Every test records a ``PASS``/``FAIL`` line, printed in the pytest terminal
summary under "acceptance criteria", and then asserts.
"""
import json
import math
import shutil
import time

import numpy as np
import pytest
from scipy.stats import mannwhitneyu
from sklearn.metrics import adjusted_rand_score

from bioprovince import cli
from bioprovince.biocluster import cluster, ward_linkage
from bioprovince.config import RunConfig, parse_config_text
from bioprovince.distance import aitchison_distance, mix_distance_matrix, pairwise_euclidean, scale_by_norm
from bioprovince.numerics import classical_mds, hungarian
from bioprovince.report import SyntheticSpec, generate_synthetic
from bioprovince.stability import PipelineParams, cluster_source_homogeneity, run_pipeline, run_stability
from bioprovince.tuning import alpha_saturation_curve, tune_r
from conftest import ACCEPTANCE_LINES
from oracles import brute_force_assignment, naive_cut, naive_ward, planted_slope, random_composition

A8_SPEC = SyntheticSpec(n_provinces=3, n_samples=150, n_asvs=300, n_grid=2000, seed=0)
INTERIOR_MARGIN = 10.0  # metres of depth from the nearest planted boundary


def record(name, ok, detail):
    line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def planted():
    data = generate_synthetic(A8_SPEC)
    r = tune_r(data.table, data.meta).r
    return data, r


def test_a1_aitchison_metric():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_sym = worst_self = worst_tri = worst_pert = 0.0
    for i in range(1000):
        d = (3, 50, 500)[i % 3]
        p, q, s = (random_composition(rng, d) for _ in range(3))
        dpq = aitchison_distance(p, q)
        worst_sym = max(worst_sym, abs(dpq - aitchison_distance(q, p)))
        worst_self = max(worst_self, aitchison_distance(p, p))
        worst_tri = max(worst_tri, dpq - aitchison_distance(p, s) - aitchison_distance(s, q))
        w = random_composition(rng, d)
        pp, qp = p * w, q * w
        worst_pert = max(worst_pert, abs(aitchison_distance(pp / pp.sum(), qp / qp.sum()) - dpq))
    elapsed = time.perf_counter() - t0
    ok = worst_sym == 0 and worst_self == 0 and worst_tri <= 1e-9 and worst_pert <= 1e-9 and elapsed < 5
    record(
        "A1", ok,
        f"symmetry {worst_sym:.1e}, self {worst_self:.1e}, triangle slack {worst_tri:.1e}, "
        f"perturbation {worst_pert:.1e}, {elapsed:.2f}s",
    )


def test_a2_mixture_boundary():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    n = 50
    d_bio = pairwise_euclidean(rng.normal(size=(n, 5)))
    d_sp = pairwise_euclidean(rng.normal(size=(n, 2)))
    aris = []
    for K in (2, 3, 5, 8):
        for alpha, single in ((0.0, d_bio), (1.0, d_sp)):
            mixed = cluster(mix_distance_matrix(d_bio, d_sp, alpha), K).memberships
            alone = cluster(scale_by_norm(single), K).memberships
            aris.append(adjusted_rand_score(alone, mixed))
    elapsed = time.perf_counter() - t0
    ok = min(aris) == 1.0 and elapsed < 5
    record("A2", ok, f"min ARI {min(aris)} over {len(aris)} runs, {elapsed:.2f}s")


def test_a3_ward_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    mismatches = 0
    worst_height = 0.0
    for i in range(200):
        n = int(rng.integers(2, 9))
        if i % 2:
            d = pairwise_euclidean(rng.normal(size=(n, int(rng.integers(1, 4)))))
        else:
            d = np.triu(rng.uniform(0.1, 1, (n, n)), 1)
            d = d + d.T
        ours, ref = ward_linkage(d), naive_ward(d)
        same = np.array_equal(ours[:, [0, 1, 3]], ref[:, [0, 1, 3]])
        rel = np.max(np.abs(ours[:, 2] - ref[:, 2]) / np.maximum(ref[:, 2], 1e-300), initial=0.0)
        worst_height = max(worst_height, rel)
        for K in range(1, n + 1):
            m = cluster(d, K, history=ours).memberships
            same &= {frozenset(np.flatnonzero(m == c).tolist()) for c in np.unique(m)} == naive_cut(d, K)
        mismatches += not same
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and worst_height <= 1e-9 and elapsed < 30
    record("A3", ok, f"{mismatches} structural mismatches, max relative height diff {worst_height:.1e}, {elapsed:.2f}s")


def test_a4_hungarian_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    bad = 0
    for i in range(200):
        k = int(rng.integers(1, 7))
        cost = rng.integers(0, 6, (k, k)).astype(float) if i % 2 else rng.uniform(0, 10, (k, k))
        perm = hungarian(cost)
        bad += sum(cost[j, perm[j]] for j in range(k)) != brute_force_assignment(cost)
    elapsed = time.perf_counter() - t0
    record("A4", bad == 0 and elapsed < 5, f"{bad} of 200 costs differ from enumeration, {elapsed:.2f}s")


def test_a5_mds_reconstruction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 11))
        x = rng.uniform(-10, 10, (n, 2))
        d = pairwise_euclidean(x)
        worst = max(worst, np.abs(pairwise_euclidean(classical_mds(d, 2)) - d).max())
    elapsed = time.perf_counter() - t0
    record("A5", worst <= 1e-8 and elapsed < 5, f"max distance error {worst:.1e}, {elapsed:.2f}s")


def test_a6_r_recovery():
    t0 = time.perf_counter()
    hits = 0
    min_pairs = math.inf
    rs = []
    for seed in range(100):
        meta, d = planted_slope(seed)
        res = tune_r(None, meta, lat_window=3.0, depth_window=10.0, d_bio=d)
        rs.append(res.r)
        hits += abs(res.r - 30.0) <= 0.05 * 30.0
        min_pairs = min(min_pairs, sum(f.n_pairs_lat for f in res.per_cruise_fits.values()))
    elapsed = time.perf_counter() - t0
    ok = hits >= 95 and min_pairs >= 500 and elapsed < 60
    record(
        "A6", ok,
        f"{hits}/100 within 5% of r = 30 (range {min(rs):.2f}..{max(rs):.2f}), "
        f">= {min_pairs} qualifying pairs, {elapsed:.2f}s",
    )


def test_a7_alpha_score_sanity(planted):
    data, r = planted
    t0 = time.perf_counter()
    curve = alpha_saturation_curve(data.table, data.meta, r, alphas=[0.0, 1.0], L=100, seed=0)
    p = mannwhitneyu(curve.scores[0], curve.null_scores[0]).pvalue
    gap = np.median(curve.scores[1]) - np.median(curve.null_scores[1])
    elapsed = time.perf_counter() - t0
    ok = p >= 0.01 and gap >= 0.3 and elapsed < 120
    record("A7", ok, f"alpha=0 Mann-Whitney p = {p:.3f}; alpha=1 median gap {gap:.3f}; {elapsed:.2f}s")


def test_a8_planted_recovery(planted):
    data, r = planted
    t0 = time.perf_counter()
    _, pmap = run_pipeline(data.table, data.meta, data.grid, PipelineParams(r, 0.1, 3, 3))
    score = adjusted_rand_score(data.grid_labels, pmap.memberships)
    elapsed = time.perf_counter() - t0
    record("A8", score >= 0.9 and elapsed < 60, f"grid ARI {score:.3f} with tuned r = {r:.3f}, {elapsed:.2f}s")


def test_a9_stability(planted):
    data, r = planted
    t0 = time.perf_counter()
    params = PipelineParams(r, 0.1, 3, 3)
    full = run_stability(data.table, data.meta, data.grid, params, fraction=1.0, replicates=5)
    sub = run_stability(data.table, data.meta, data.grid, params, fraction=0.7, replicates=50, seed=0)
    interior = data.grid_margin >= INTERIOR_MARGIN
    med = float(np.median(sub.stability[interior]))
    cfg = RunConfig(**parse_config_text(RunConfig().to_text()))
    defaults = (cfg.fraction, cfg.replicates) == (0.7, 100)
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(full.stability == 1.0)) and med >= 0.9 and defaults and elapsed < 300
    record(
        "A9", ok,
        f"fraction 1.0 all ones: {bool(np.all(full.stability == 1.0))}; "
        f"median interior stability {med:.3f} over {interior.sum()} points; defaults kept: {defaults}; {elapsed:.2f}s",
    )


def test_a10_determinism(tmp_path, monkeypatch):
    t0 = time.perf_counter()
    fx = tmp_path / "fx"
    # a grid larger than one prediction chunk so threads actually split the work
    assert cli.main(["synth", "--n-grid", "6000", "--out", str(fx)]) == 0
    first = tmp_path / "first"
    args = [
        "--composition", fx / "composition.csv", "--meta", fx / "meta.csv", "--grid", fx / "grid.csv",
        "--r", 3.4, "--alpha", 0.1, "--K", 3, "--k", 3, "--out", first,
    ]
    monkeypatch.setenv("BIOPROVINCE_THREADS", "1")
    assert cli.main(["pipeline"] + [str(a) for a in args]) == 0
    manifest = first / "manifest.json"
    runs = []
    for threads in ("1", "4"):
        out = tmp_path / f"threads{threads}"
        monkeypatch.setenv("BIOPROVINCE_THREADS", threads)
        cfg = cli.config_from_manifest(manifest, out=str(out))
        cli.cmd_pipeline(cfg)
        runs.append(out)
    names = sorted(json.loads(manifest.read_text())["outputs"])
    same = all((runs[0] / n).read_bytes() == (runs[1] / n).read_bytes() == (first / n).read_bytes() for n in names)
    same &= (runs[0] / "manifest.json").read_bytes() == (runs[1] / "manifest.json").read_bytes()
    elapsed = time.perf_counter() - t0
    shutil.rmtree(fx)
    record("A10", same and elapsed < 120, f"{len(names)} outputs byte-identical across 1 and 4 threads: {same}, {elapsed:.2f}s")


def test_a11_kl_closed_forms():
    single = cluster_source_homogeneity([1] * 4 + [2] * 5, ["c1"] * 4 + ["c1", "c2", "c3", "c4", "c5"])
    err_single = abs(single[1] - math.log(5))
    err_uniform = abs(single[2])
    ok = err_single <= 1e-12 and err_uniform <= 1e-12
    record("A11", ok, f"|KL - ln 5| = {err_single:.1e}, |KL uniform| = {err_uniform:.1e}")


def test_a12_scale():
    data = generate_synthetic(SyntheticSpec(n_samples=300, n_asvs=500, n_grid=10000, seed=1))
    t0 = time.perf_counter()
    _, pmap = run_pipeline(data.table, data.meta, data.grid, PipelineParams(3.4, 0.1, 3, 3), threads=cli.threads_from_env())
    elapsed = time.perf_counter() - t0
    ok = elapsed < 60 and len(pmap.memberships) == 10000
    record("A12", ok, f"cluster + predict for n = 300, d = 500, B = 10000 in {elapsed:.2f}s")
