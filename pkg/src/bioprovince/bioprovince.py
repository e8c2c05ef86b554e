"""Localized nearest-neighbour prediction of province labels on a grid."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import GridSpec, SampleMeta
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

CHUNK = 2048


@dataclass(frozen=True, eq=False)
class ProvinceMap:
    grid_ids: tuple
    memberships: np.ndarray
    k_prime: np.ndarray
    tie_broken: np.ndarray
    fallback_used: np.ndarray


def min_max_rescale(values_samples, values_grid, domain: str = "union"):
    """Linearly map values to [0, 1] using the min and max of the reference set.

    The reference set is the union of both inputs, or the samples alone when
    ``domain="samples"``. A constant reference maps everything to 0.5.
    """
    s = np.asarray(values_samples, dtype=float)
    g = np.asarray(values_grid, dtype=float)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(g))):
        raise DataError("abiotic values must be finite")
    if domain not in ("union", "samples"):
        raise ConfigError(f"unknown rescale domain {domain!r}")
    ref = np.concatenate([s.ravel(), g.ravel()]) if domain == "union" else s.ravel()
    if ref.size == 0:
        raise DataError("nothing to rescale")
    lo, hi = ref.min(), ref.max()
    if hi == lo:
        return np.full(s.shape, 0.5), np.full(g.shape, 0.5)
    return (s - lo) / (hi - lo), (g - lo) / (hi - lo)


def _knn_mask(dist: np.ndarray, k: int):
    # stable sort: equal distances keep ascending sample index
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    mask = np.zeros(dist.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask, order


def _predict_chunk(g_abio, s_abio, g_xy, s_xy, memberships, n_labels, k):
    abio = np.sqrt(((g_abio[:, None, :] - s_abio[None, :, :]) ** 2).sum(axis=2))
    spatial = np.sqrt(((g_xy[:, None, :] - s_xy[None, :, :]) ** 2).sum(axis=2))
    a_mask, _ = _knn_mask(abio, k)
    s_mask, s_order = _knn_mask(spatial, k)
    cand = a_mask & s_mask
    k_prime = cand.sum(axis=1)
    onehot = memberships[None, :] == np.arange(1, n_labels + 1)[:, None]  # (K, n)
    counts = cand.astype(np.int64) @ onehot.T.astype(np.int64)  # (b, K)
    top = counts.max(axis=1)
    n_top = (counts == top[:, None]).sum(axis=1)
    mode = counts.argmax(axis=1) + 1

    # nearest candidate in spatial order; candidates are a subset of S_j
    cand_in_order = np.take_along_axis(cand, s_order, axis=1)
    first_pos = cand_in_order.argmax(axis=1)
    nearest_cand = np.take_along_axis(s_order, first_pos[:, None], axis=1)[:, 0]

    fallback = k_prime == 0
    tie = (~fallback) & (n_top > 1)
    out = np.where(tie, memberships[nearest_cand], mode)
    out = np.where(fallback, memberships[s_order[:, 0]], out)
    return out, np.where(fallback, 1, k_prime), tie, fallback


def predict(
    grid: GridSpec,
    meta: SampleMeta,
    memberships,
    k: int,
    r: float,
    rescale_domain: str = "union",
    threads: int = 1,
) -> ProvinceMap:
    """Label each grid point from its abiotically and spatially nearest samples.

    For grid point ``j`` the candidates are the samples that are among the
    ``k`` nearest both in rescaled (temperature, salinity) and in
    ``sqrt(r^2 dlat^2 + ddepth^2)``. The label is the candidates' majority;
    a tied vote takes the spatially nearest candidate's label, and an empty
    candidate set takes the spatially nearest sample's label.

    ``k_prime`` is the candidate count (1 for the fallback).
    """
    if int(k) != k or k < 1:
        raise ConfigError(f"k must be a positive integer, got {k}")
    if not r > 0:
        raise ConfigError(f"r must be positive, got {r}")
    memberships = np.asarray(memberships, dtype=int)
    n = len(meta)
    if memberships.shape != (n,):
        raise DataError("memberships do not match the samples")
    if len(grid) == 0:
        raise DataError("empty grid")
    k = min(int(k), n)
    t_s, t_g = min_max_rescale(meta.temperature, grid.temperature, rescale_domain)
    sal_s, sal_g = min_max_rescale(meta.salinity, grid.salinity, rescale_domain)
    s_abio = np.column_stack([t_s, sal_s])
    g_abio = np.column_stack([t_g, sal_g])
    s_xy = np.column_stack([r * meta.latitude, meta.depth])
    g_xy = np.column_stack([r * grid.latitude, grid.depth])
    n_labels = int(memberships.max())

    b = len(grid)
    bounds = [(lo, min(lo + CHUNK, b)) for lo in range(0, b, CHUNK)]

    def run(bound):
        lo, hi = bound
        return _predict_chunk(g_abio[lo:hi], s_abio, g_xy[lo:hi], s_xy, memberships, n_labels, k)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(bd) for bd in bounds]
    out, kp, tie, fb = (np.concatenate(p) for p in zip(*parts))
    logger.info("predicted %d grid points: %d fallbacks, %d ties", b, fb.sum(), tie.sum())
    return ProvinceMap(grid.grid_ids, out.astype(int), kp.astype(int), tie, fb)
