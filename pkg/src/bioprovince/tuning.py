"""Hyperparameter guidance, picked in the order r, alpha, K.

None of these choose a final value on the operator's behalf: each returns the
full curve together with a suggestion.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .biocluster import cut_tree, ward_linkage, within_cluster_distance
from .data import CompositionTable, SampleMeta
from .distance import bio_distance_matrix, mix_scaled, scale_by_norm, spatial_coordinates, pairwise_euclidean
from .errors import ConfigError, DataError, NumericalError
from .numerics import DegenerateHullWarning, RegressionFit, classical_mds, convex_hull_fraction, linear_regression

logger = logging.getLogger(__name__)

LAT_WINDOW = 3.0
DEPTH_WINDOW = 10.0
N_REPLICATES = 100
KNN_K_RANGE = (1, 5)


@dataclass(frozen=True)
class CruiseFit:
    lat_fit: Optional[RegressionFit]
    depth_fit: Optional[RegressionFit]
    n_pairs_lat: int
    n_pairs_depth: int
    n_samples: int


@dataclass(frozen=True)
class RTuningResult:
    per_cruise_fits: dict
    b1: float
    b2: float
    r: float


def cruise_pairs(d_bio, latitude, depth, lat_window=LAT_WINDOW, depth_window=DEPTH_WINDOW):
    """Within-window pairs of one cruise as ``(d_bio, |dlat|, |ddepth|)`` arrays."""
    latitude = np.asarray(latitude, dtype=float)
    depth = np.asarray(depth, dtype=float)
    i, j = np.triu_indices(len(latitude), k=1)
    dlat = np.abs(latitude[i] - latitude[j])
    ddep = np.abs(depth[i] - depth[j])
    keep = (dlat <= lat_window) & (ddep <= depth_window)
    return np.asarray(d_bio)[i[keep], j[keep]], dlat[keep], ddep[keep]


def _try_fit(x, y) -> Optional[RegressionFit]:
    try:
        return linear_regression(x, y)
    except NumericalError:
        return None


def tune_r(
    table: Optional[CompositionTable],
    meta: SampleMeta,
    lat_window: float = LAT_WINDOW,
    depth_window: float = DEPTH_WINDOW,
    p_threshold: float = 0.05,
    weights: str = "pairs",
    d_bio=None,
) -> RTuningResult:
    """Latitude-to-depth scale from distance-decay slopes.

    Within each cruise, pairs closer than both windows are collected and their
    Aitchison distance is regressed separately on ``|dlat|`` and ``|ddepth|``.
    Slopes that are positive with ``p < p_threshold`` are averaged over cruises,
    weighted by pair count (``weights="pairs"``) or sample count
    (``weights="samples"``); ``r`` is the latitude average over the depth one.

    ``d_bio`` may be given to skip recomputing distances from ``table``.
    """
    if weights not in ("pairs", "samples"):
        raise ConfigError(f"unknown weighting {weights!r}")
    if lat_window <= 0 or depth_window <= 0:
        raise ConfigError("windows must be positive")
    if d_bio is None:
        if table is None:
            raise ConfigError("tune_r needs a composition table or a distance matrix")
        d_bio = bio_distance_matrix(table)
    d_bio = np.asarray(d_bio, dtype=float)
    cruises = np.asarray(meta.cruise)
    fits = {}
    for c in sorted(set(meta.cruise)):
        idx = np.flatnonzero(cruises == c)
        y, dlat, ddep = cruise_pairs(d_bio[np.ix_(idx, idx)], meta.latitude[idx], meta.depth[idx], lat_window, depth_window)
        lat_fit = _try_fit(dlat, y) if len(y) >= 3 else None
        depth_fit = _try_fit(ddep, y) if len(y) >= 3 else None
        fits[c] = CruiseFit(lat_fit, depth_fit, len(y), len(y), len(idx))
    if all(f.n_pairs_lat < 3 for f in fits.values()):
        raise DataError("fewer than 3 qualifying sample pairs in every cruise")

    def average(dim):
        num = den = 0.0
        for f in fits.values():
            fit = getattr(f, f"{dim}_fit")
            if fit is None or not (fit.slope > 0 and fit.p_value < p_threshold):
                continue
            w = getattr(f, f"n_pairs_{dim}") if weights == "pairs" else f.n_samples
            num += w * fit.slope
            den += w
        if den == 0:
            raise DataError(f"no cruise has a significant positive {'latitude' if dim == 'lat' else 'depth'} slope")
        return num / den

    b1 = average("lat")
    b2 = average("depth")
    return RTuningResult(fits, b1, b2, b1 / b2)


@dataclass(frozen=True, eq=False)
class AlphaCurve:
    alphas: np.ndarray
    scores: np.ndarray  # (len(alphas), L)
    null_scores: np.ndarray
    suggested_alpha: float
    n_degenerate: int = field(default=0)


def _corner_positions(lat, depth):
    return np.array(
        [
            [lat.min(), depth.min()],
            [lat.min(), depth.max()],
            [lat.max(), depth.min()],
            [lat.max(), depth.max()],
        ]
    )


def _hull_scores(h_bio, h_spatial, alphas, n):
    out = np.empty(len(alphas))
    for a, alpha in enumerate(alphas):
        coords = classical_mds(mix_scaled(h_bio, h_spatial, alpha), 2)
        out[a] = convex_hull_fraction(coords[:n], coords[n:])
    return out


def _augmented_score(d_bio, lat, depth, r, alphas, comp_idx, positions):
    n = len(lat)
    aug = np.concatenate([np.arange(n), comp_idx])
    h_bio = scale_by_norm(d_bio[np.ix_(aug, aug)])
    lat_aug = np.concatenate([lat, positions[:, 0]])
    dep_aug = np.concatenate([depth, positions[:, 1]])
    h_spatial = scale_by_norm(pairwise_euclidean(spatial_coordinates(lat_aug, dep_aug, r)))
    return _hull_scores(h_bio, h_spatial, alphas, n)


def band_overlap(a, b, level: float = 0.95) -> bool:
    q = [(1 - level) / 2, (1 + level) / 2]
    lo_a, hi_a = np.quantile(a, q)
    lo_b, hi_b = np.quantile(b, q)
    return bool(lo_a <= hi_b and lo_b <= hi_a)


def alpha_saturation_curve(
    table: Optional[CompositionTable],
    meta: SampleMeta,
    r: float,
    alphas: Sequence[float] = tuple(np.round(np.linspace(0, 1, 11), 10)),
    L: int = N_REPLICATES,
    seed: int = 0,
    d_bio=None,
) -> AlphaCurve:
    """Spatial saturation scores of the mixed distance across an alpha grid.

    Each replicate appends four pseudo-samples whose compositions are copies of
    randomly drawn real samples. For the score they sit at the corners of the
    latitude-depth bounding box; for the null score they sit at the locations
    of four random distinct samples. After mixing and 2-d MDS, the score is the
    fraction of real samples inside the hull of the four pseudo-samples.

    ``suggested_alpha`` is the largest alpha before the first grid value where
    the 95% quantile bands of scores and null scores stop overlapping.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size == 0:
        raise ConfigError("empty alpha grid")
    if np.any((alphas < 0) | (alphas > 1)):
        raise ConfigError("alphas must lie in [0, 1]")
    if L < 1:
        raise ConfigError("L must be at least 1")
    n = len(meta)
    if n < 8:
        raise DataError(f"alpha saturation needs at least 8 samples, got {n}")
    if d_bio is None:
        d_bio = bio_distance_matrix(table)
    d_bio = np.asarray(d_bio, dtype=float)
    lat, depth = meta.latitude, meta.depth
    corners = _corner_positions(lat, depth)
    scores = np.empty((len(alphas), L))
    nulls = np.empty((len(alphas), L))
    n_degenerate = 0
    for rep in range(L):
        rng = np.random.default_rng([seed, rep])
        comp = rng.choice(n, 4, replace=False)
        comp_null = rng.choice(n, 4, replace=False)
        locs = rng.choice(n, 4, replace=False)
        null_pos = np.column_stack([lat[locs], depth[locs]])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateHullWarning)
            scores[:, rep] = _augmented_score(d_bio, lat, depth, r, alphas, comp, corners)
            nulls[:, rep] = _augmented_score(d_bio, lat, depth, r, alphas, comp_null, null_pos)
        n_degenerate += sum(issubclass(w.category, DegenerateHullWarning) for w in caught)
    if n_degenerate:
        logger.warning("%d hull scores had collinear corners and were set to 0", n_degenerate)

    order = np.argsort(alphas, kind="stable")
    suggested = float(alphas[order[0]])
    for a in order:
        if not band_overlap(scores[a], nulls[a]):
            break
        suggested = float(alphas[a])
    return AlphaCurve(alphas, scores, nulls, suggested, n_degenerate)


@dataclass(frozen=True, eq=False)
class KCurve:
    Ks: np.ndarray
    wcd: np.ndarray
    suggested_K: int


def k_elbow_curve(dist_alpha, Ks: Sequence[int]) -> KCurve:
    """Within-cluster distance for each K, cut from a single dendrogram.

    The suggestion is the K with the largest discrete second difference of
    the curve over the sorted Ks; with fewer than three Ks the smallest is
    returned.
    """
    dist_alpha = np.asarray(dist_alpha, dtype=float)
    n = dist_alpha.shape[0]
    Ks = np.array(sorted(set(int(k) for k in Ks)))
    if Ks.size == 0:
        raise ConfigError("no candidate K values")
    if Ks.min() < 1 or Ks.max() > n:
        raise ConfigError(f"candidate K values must lie in 1..{n}")
    history = ward_linkage(dist_alpha)
    wcd = np.array([within_cluster_distance(dist_alpha, cut_tree(history, n, k)) for k in Ks])
    if len(Ks) < 3:
        return KCurve(Ks, wcd, int(Ks[0]))
    second = wcd[:-2] - 2 * wcd[1:-1] + wcd[2:]
    return KCurve(Ks, wcd, int(Ks[1 + int(np.argmax(second))]))


def knn_k_bounds() -> tuple[int, int]:
    return KNN_K_RANGE


def check_knn_k(k: int) -> None:
    """Reject k < 1; warn when k is outside the usual range."""
    if int(k) != k or k < 1:
        raise ConfigError(f"k must be a positive integer, got {k}")
    lo, hi = knn_k_bounds()
    if not lo <= k <= hi:
        warnings.warn(f"k = {k} is outside the usual range {lo}..{hi}", UserWarning, stacklevel=2)
