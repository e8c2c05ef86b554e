import numpy as np
import pytest

from bioprovince.data import SampleMeta
from bioprovince.distance import pairwise_euclidean
from bioprovince.errors import ConfigError, DataError
from bioprovince.tuning import (
    DEPTH_WINDOW,
    LAT_WINDOW,
    alpha_saturation_curve,
    band_overlap,
    check_knn_k,
    cruise_pairs,
    k_elbow_curve,
    tune_r,
)
from oracles import ols_closed_form, planted_slope


def test_default_windows():
    assert (LAT_WINDOW, DEPTH_WINDOW) == (3.0, 10.0)


def test_cruise_pairs_window_is_inclusive():
    lat = np.array([0.0, 3.0, 3.5])
    depth = np.array([0.0, 10.0, 20.5])
    d = np.arange(9.0).reshape(3, 3)
    d = d + d.T
    y, dlat, ddep = cruise_pairs(d, lat, depth)
    # (0,1) sits on both window edges; (0,2) is too far in latitude; (1,2) too far in depth
    np.testing.assert_array_equal(y, [d[0, 1]])
    np.testing.assert_array_equal(dlat, [3.0])
    np.testing.assert_array_equal(ddep, [10.0])


def test_tune_r_recovers_planted_ratio():
    meta, d = planted_slope(0)
    res = tune_r(None, meta, d_bio=d)
    assert res.r == pytest.approx(30.0, rel=0.05)
    assert res.b1 == pytest.approx(0.06, rel=0.05)
    assert set(res.per_cruise_fits) == {"C0", "C1", "C2"}


def test_tune_r_weighted_average_by_hand():
    meta, d = planted_slope(1)
    res = tune_r(None, meta, d_bio=d)
    cruises = np.array(meta.cruise)
    slopes, weights = [], []
    for c in ("C0", "C1", "C2"):
        idx = np.flatnonzero(cruises == c)
        y, dlat, _ = cruise_pairs(d[np.ix_(idx, idx)], meta.latitude[idx], meta.depth[idx])
        slopes.append(ols_closed_form(dlat, y)[0])
        weights.append(len(y))
    assert res.b1 == pytest.approx(np.average(slopes, weights=weights), rel=1e-9)
    by_samples = tune_r(None, meta, d_bio=d, weights="samples")
    # equal sample counts per cruise: a plain mean
    assert by_samples.b1 == pytest.approx(np.mean(slopes), rel=1e-9)


def test_tune_r_skips_insignificant_and_negative_slopes():
    meta, d = planted_slope(2, n_cruises=2)
    # flip the second cruise's distances so its slopes turn negative
    cruises = np.array(meta.cruise)
    idx = np.flatnonzero(cruises == "C1")
    d = d.copy()
    block = d[np.ix_(idx, idx)]
    d[np.ix_(idx, idx)] = np.where(block > 0, 1.0 / (block + 1.0), 0.0)
    res = tune_r(None, meta, d_bio=d)
    only = tune_r(None, meta.subset(np.flatnonzero(cruises == "C0")), d_bio=d[np.ix_(cruises == "C0", cruises == "C0")])
    assert res.r == pytest.approx(only.r, rel=1e-12)
    assert res.per_cruise_fits["C1"].lat_fit.slope < 0


def test_tune_r_errors():
    meta = SampleMeta(["a", "b", "c"], [0, 10, 20], [0, 0, 0], [0] * 3, [0] * 3, ["x"] * 3)
    with pytest.raises(DataError, match="fewer than 3"):
        tune_r(None, meta, d_bio=np.ones((3, 3)) - np.eye(3))
    rng = np.random.default_rng(0)
    n = 40
    meta = SampleMeta([f"s{i}" for i in range(n)], rng.uniform(0, 2, n), rng.uniform(0, 8, n), [0] * n, [0] * n, ["x"] * n)
    noise = np.triu(rng.uniform(0, 1, (n, n)), 1)
    with pytest.raises(DataError, match="significant positive"):
        tune_r(None, meta, d_bio=noise + noise.T)
    with pytest.raises(ConfigError):
        tune_r(None, meta, weights="cruises", d_bio=noise + noise.T)


def test_band_overlap():
    assert band_overlap(np.linspace(0, 1, 101), np.linspace(0.9, 2, 101))
    assert not band_overlap(np.linspace(0, 1, 101), np.linspace(1.1, 2, 101))


@pytest.fixture(scope="module")
def small_field():
    rng = np.random.default_rng(4)
    n = 40
    lat = rng.uniform(-20, 20, n)
    depth = rng.uniform(0, 200, n)
    meta = SampleMeta([f"s{i}" for i in range(n)], lat, depth, [0] * n, [0] * n, ["c"] * n)
    bio = pairwise_euclidean(np.column_stack([lat, depth / 10]) + rng.normal(0, 3, (n, 2)))
    return meta, bio


def test_alpha_curve_shape_and_determinism(small_field):
    meta, bio = small_field
    a = alpha_saturation_curve(None, meta, 10.0, alphas=[0.0, 0.5, 1.0], L=12, seed=3, d_bio=bio)
    b = alpha_saturation_curve(None, meta, 10.0, alphas=[0.0, 0.5, 1.0], L=12, seed=3, d_bio=bio)
    assert a.scores.shape == a.null_scores.shape == (3, 12)
    assert np.array_equal(a.scores, b.scores) and np.array_equal(a.null_scores, b.null_scores)
    assert np.all((a.scores >= 0) & (a.scores <= 1))
    # corners of the bounding box enclose every sample when distances are purely spatial
    assert np.all(a.scores[2] == 1.0)


def test_alpha_suggestion_rule(small_field):
    meta, bio = small_field
    curve = alpha_saturation_curve(None, meta, 10.0, L=20, seed=0, d_bio=bio)
    sep = [not band_overlap(curve.scores[i], curve.null_scores[i]) for i in range(len(curve.alphas))]
    first = sep.index(True) if any(sep) else len(sep)
    assert curve.suggested_alpha == curve.alphas[max(first - 1, 0)]


def test_alpha_curve_rejects(small_field):
    meta, bio = small_field
    with pytest.raises(ConfigError):
        alpha_saturation_curve(None, meta, 10.0, alphas=[1.5], d_bio=bio)
    with pytest.raises(ConfigError):
        alpha_saturation_curve(None, meta, 10.0, L=0, d_bio=bio)
    tiny = meta.subset(np.arange(5))
    with pytest.raises(DataError):
        alpha_saturation_curve(None, tiny, 10.0, d_bio=bio[:5, :5])


def three_blobs():
    # unequal sizes: equal, equidistant blobs make the second difference favour K = 2
    rng = np.random.default_rng(0)
    centres = [(0.0, 0.0), (1.0, 0.0), (0.5, 1.414)]
    sizes = [12, 12, 6]
    pts = np.vstack([np.array(c) + 0.02 * rng.normal(size=(m, 2)) for c, m in zip(centres, sizes)])
    return pairwise_euclidean(pts)


def test_k_elbow_three_blobs():
    curve = k_elbow_curve(three_blobs(), range(1, 9))
    assert curve.suggested_K == 3
    assert np.all(np.diff(curve.wcd) <= 1e-12)
    assert curve.Ks.tolist() == list(range(1, 9))


def test_k_elbow_edge_cases():
    d = three_blobs()
    assert k_elbow_curve(d, [4, 2]).suggested_K == 2
    assert k_elbow_curve(d, [5, 1, 3, 3]).Ks.tolist() == [1, 3, 5]
    with pytest.raises(ConfigError):
        k_elbow_curve(d, [0, 1])
    with pytest.raises(ConfigError):
        k_elbow_curve(d, [])


def test_check_knn_k():
    check_knn_k(3)
    with pytest.warns(UserWarning):
        check_knn_k(8)
    with pytest.raises(ConfigError):
        check_knn_k(0)


# worked examples and invariants ------------------------------------------------


def test_single_cruise_recovers_planted_ratio():
    meta, d = planted_slope(4, n_cruises=1)
    assert tune_r(None, meta, d_bio=d).r == pytest.approx(30.0, rel=0.05)


def per_cruise_slopes(meta, d):
    cruises = np.array(meta.cruise)
    out = {}
    for c in sorted(set(meta.cruise)):
        idx = np.flatnonzero(cruises == c)
        y, dlat, ddep = cruise_pairs(d[np.ix_(idx, idx)], meta.latitude[idx], meta.depth[idx])
        out[c] = (ols_closed_form(dlat, y)[0], ols_closed_form(ddep, y)[0], len(y))
    return out


def unequal_cruises(seed):
    meta, d = planted_slope(seed, n_cruises=2)
    cruises = np.array(meta.cruise)
    # drop half of the second cruise so the pair counts differ
    keep = np.flatnonzero((cruises == "C0") | (np.arange(len(cruises)) % 2 == 0))
    return meta.subset(keep), d[np.ix_(keep, keep)]


def test_unequal_pair_counts_share_common_slopes():
    meta, d = unequal_cruises(5)
    res = tune_r(None, meta, d_bio=d)
    counts = [f.n_pairs_lat for f in res.per_cruise_fits.values()]
    assert counts[0] > 2 * counts[1]
    assert res.b1 == pytest.approx(0.06, rel=0.05)
    assert res.b2 == pytest.approx(0.002, rel=0.05)


def test_forced_slope_difference_exposes_weights():
    meta, d = unequal_cruises(6)
    cruises = np.array(meta.cruise)
    idx = np.flatnonzero(cruises == "C1")
    d = d.copy()
    d[np.ix_(idx, idx)] *= 2.0
    res = tune_r(None, meta, d_bio=d)
    fits = per_cruise_slopes(meta, d)
    lat = [fits[c][0] for c in ("C0", "C1")]
    dep = [fits[c][1] for c in ("C0", "C1")]
    w = [fits[c][2] for c in ("C0", "C1")]
    assert lat[1] == pytest.approx(2 * lat[0], rel=0.15)
    assert res.b1 == pytest.approx(np.average(lat, weights=w), rel=1e-9)
    assert res.b2 == pytest.approx(np.average(dep, weights=w), rel=1e-9)


def test_negative_depth_slope_is_excluded_from_b2_only():
    meta, d = planted_slope(7, n_cruises=2)
    cruises = np.array(meta.cruise)
    idx = np.flatnonzero(cruises == "C1")
    # rebuild C1 so distance falls with depth separation but still rises with latitude
    lat, dep = meta.latitude[idx], meta.depth[idx]
    d = d.copy()
    d[np.ix_(idx, idx)] = 0.06 * np.abs(lat[:, None] - lat) + 0.002 * (200 - np.abs(dep[:, None] - dep))
    d[idx, idx] = 0.0
    res = tune_r(None, meta, d_bio=d)
    fits = per_cruise_slopes(meta, d)
    assert res.per_cruise_fits["C1"].depth_fit.slope < 0
    assert res.b2 == pytest.approx(fits["C0"][1], rel=1e-9)


def test_tune_r_ignores_sample_and_cruise_order():
    meta, d = planted_slope(8)
    base = tune_r(None, meta, d_bio=d).r
    perm = np.random.default_rng(0).permutation(len(meta))
    assert tune_r(None, meta.subset(perm), d_bio=d[np.ix_(perm, perm)]).r == pytest.approx(base, rel=1e-12)
    renamed = SampleMeta(meta.sample_ids, meta.latitude, meta.depth, meta.temperature, meta.salinity,
                         [{"C0": "Z", "C1": "A", "C2": "M"}[c] for c in meta.cruise])
    assert tune_r(None, renamed, d_bio=d).r == pytest.approx(base, rel=1e-12)


def test_k_curve_at_n_is_zero():
    d = three_blobs()
    assert k_elbow_curve(d, [len(d)]).wcd.tolist() == [0.0]


def test_knn_k_soft_bound():
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_knn_k(3)
    with pytest.warns(UserWarning):
        check_knn_k(12)
