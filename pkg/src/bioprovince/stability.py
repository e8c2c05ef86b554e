"""Province stability under ASV subsampling, and cruise-mix homogeneity."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .biocluster import cluster
from .bioprovince import predict
from .data import CompositionTable, GridSpec, SampleMeta, subsample_asvs
from .distance import bio_distance_matrix, mix_distance_matrix, spatial_distance_matrix
from .errors import BioprovinceError, ConfigError, DataError
from .numerics import hungarian

logger = logging.getLogger(__name__)

FRACTION = 0.7
REPLICATES = 100


@dataclass(frozen=True, eq=False)
class StabilityMap:
    grid_ids: tuple
    modal_cluster: np.ndarray
    stability: np.ndarray
    n_replicates: int
    counts: np.ndarray  # (B, K) replicate tallies


@dataclass(frozen=True)
class PipelineParams:
    r: float
    alpha: float
    K: int
    k: int


def replicate_seed(seed: int, replicate: int) -> int:
    """Deterministic per-replicate seed, independent of execution order."""
    return int(np.random.SeedSequence([seed, replicate]).generate_state(1)[0])


def align_labels(ref_memberships, rep_memberships, spatial_dist, K: int) -> np.ndarray:
    """Relabel a replicate's clusters to best match the reference ones.

    The cost of pairing reference cluster ``k1`` with replicate cluster ``k2``
    is the mean spatial distance between their members. Empty replicate
    clusters cost ten times the largest finite cost.

    Returns
    -------
    ndarray
        ``perm`` of length ``K + 1`` with ``perm[k2]`` the new label of
        replicate cluster ``k2`` (index 0 unused), so ``perm[rep]`` relabels.
    """
    ref = np.asarray(ref_memberships)
    rep = np.asarray(rep_memberships)
    if ref.max() > K or rep.max() > K:
        raise ConfigError("cluster labels exceed K")
    if len(np.unique(ref)) != K:
        raise ConfigError(f"reference has {len(np.unique(ref))} clusters, expected K = {K}")
    spatial_dist = np.asarray(spatial_dist, dtype=float)
    cost = np.full((K, K), np.nan)
    for k1 in range(1, K + 1):
        a = ref == k1
        for k2 in range(1, K + 1):
            b = rep == k2
            if b.any():
                cost[k1 - 1, k2 - 1] = spatial_dist[np.ix_(a, b)].mean()
    finite = cost[np.isfinite(cost)]
    cost[~np.isfinite(cost)] = 10 * (finite.max() if finite.size and finite.max() > 0 else 1.0)
    col_of_row = hungarian(cost)
    perm = np.zeros(K + 1, dtype=int)
    perm[col_of_row + 1] = np.arange(1, K + 1)
    return perm


def run_pipeline(table, meta, grid, params: PipelineParams, d_spatial=None, threads: int = 1):
    """Cluster the samples and predict the grid; returns (ClusterResult, ProvinceMap)."""
    if d_spatial is None:
        d_spatial = spatial_distance_matrix(meta, params.r)
    d_alpha = mix_distance_matrix(bio_distance_matrix(table), d_spatial, params.alpha)
    result = cluster(d_alpha, params.K, latitude=meta.latitude)
    pmap = predict(grid, meta, result.memberships, params.k, params.r, threads=threads)
    return result, pmap


def run_stability(
    table: CompositionTable,
    meta: SampleMeta,
    grid: GridSpec,
    params: PipelineParams,
    fraction: float = FRACTION,
    replicates: int = REPLICATES,
    seed: int = 0,
    threads: int = 1,
) -> StabilityMap:
    """Rerun the pipeline on ASV-subsampled tables and tally grid labels.

    Replicate labels are aligned to the full-data run before counting.
    ``stability[j]`` is the share of replicates giving grid point ``j`` its
    most frequent label (smallest label on ties).
    """
    if replicates < 1:
        raise ConfigError("replicates must be at least 1")
    if not 0 < fraction <= 1:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    d_spatial = spatial_distance_matrix(meta, params.r)
    ref, _ = run_pipeline(table, meta, grid, params, d_spatial)
    K = params.K

    def one(rep):
        try:
            sub = subsample_asvs(table, fraction, replicate_seed(seed, rep))
            res, pmap = run_pipeline(sub, meta, grid, params, d_spatial)
            perm = align_labels(ref.memberships, res.memberships, d_spatial, K)
            return perm[pmap.memberships]
        except BioprovinceError as exc:
            raise type(exc)(f"replicate {rep}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            labels = list(pool.map(one, range(replicates)))
    else:
        labels = [one(rep) for rep in range(replicates)]

    counts = np.zeros((len(grid), K), dtype=np.int64)
    rows = np.arange(len(grid))
    for lab in labels:
        np.add.at(counts, (rows, lab - 1), 1)
    modal = counts.argmax(axis=1) + 1
    stab = counts.max(axis=1) / replicates
    return StabilityMap(grid.grid_ids, modal, stab, replicates, counts)


def cluster_source_homogeneity(memberships, cruises) -> dict:
    """KL divergence of each cluster's cruise mix from a uniform mix.

    The uniform reference covers every cruise present in the data.
    """
    memberships = np.asarray(memberships)
    cruises = np.asarray(cruises, dtype=object)
    if memberships.shape != cruises.shape:
        raise DataError("memberships and cruises differ in length")
    if memberships.size == 0:
        raise DataError("no samples")
    levels = sorted(set(cruises.tolist()))
    u = 1.0 / len(levels)
    out = {}
    for label in sorted(set(memberships.tolist())):
        mine = cruises[memberships == label]
        q = np.array([np.sum(mine == c) for c in levels], dtype=float) / len(mine)
        nz = q > 0
        out[label] = float(np.sum(q[nz] * np.log(q[nz] / u)))
    return out
