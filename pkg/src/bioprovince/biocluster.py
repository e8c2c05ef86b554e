"""Ward agglomerative clustering of a mixed distance matrix.

Merges use the Lance-Williams update on squared dissimilarities (the Ward.D2
convention), so merge heights are on the scale of the input distances.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .numerics import check_distance_matrix


@dataclass(frozen=True, eq=False)
class ClusterResult:
    """Merge history plus a flat cut.

    ``merge_history`` rows are ``(left_node, right_node, height, size)`` with
    scipy node numbering: leaves ``0..n-1``, the merge at step ``t`` is node
    ``n + t``. ``memberships`` hold labels ``1..K``.
    """

    merge_history: np.ndarray
    memberships: np.ndarray
    K: int


def ward_linkage(dist) -> np.ndarray:
    """Full Ward merge history of a distance matrix.

    Ties in the merge cost go to the smallest ``(i, j)`` pair, where each
    cluster is identified by its smallest member index.
    """
    dist = check_distance_matrix(dist)
    n = dist.shape[0]
    d2 = dist**2
    # only the strict upper triangle is searched; argmin on the flattened
    # matrix then yields the lexicographically smallest (i, j) among ties
    work = np.where(np.triu(np.ones((n, n), dtype=bool), k=1), d2, np.inf)
    sizes = np.ones(n)
    node = np.arange(n)
    active = np.ones(n, dtype=bool)
    history = np.zeros((max(n - 1, 0), 4))
    for t in range(n - 1):
        flat = int(np.argmin(work))
        i, j = divmod(flat, n)
        dij = work[i, j]
        history[t] = (node[i], node[j], np.sqrt(max(dij, 0.0)), sizes[i] + sizes[j])
        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        ni, nj, nk = sizes[i], sizes[j], sizes[others]
        dik = d2[i, others]
        djk = d2[j, others]
        new = ((ni + nk) * dik + (nj + nk) * djk - nk * dij) / (ni + nj + nk)
        d2[i, others] = new
        d2[others, i] = new
        lo = others < i
        work[others[lo], i] = new[lo]
        work[i, others[~lo]] = new[~lo]
        work[j, :] = np.inf
        work[:, j] = np.inf
        active[j] = False
        sizes[i] += sizes[j]
        node[i] = n + t
    return history


def cut_tree(history: np.ndarray, n: int, K: int) -> np.ndarray:
    """Raw 0-based cluster ids after applying the first ``n - K`` merges.

    Ids are the smallest member index of each cluster.
    """
    if not 1 <= K <= n:
        raise ConfigError(f"K must lie in 1..{n}, got {K}")
    parent = np.arange(2 * n - 1)
    for t in range(n - K):
        a, b = int(history[t, 0]), int(history[t, 1])
        parent[a] = n + t
        parent[b] = n + t
    root = np.arange(n)
    for _ in range(n):
        nxt = parent[root]
        if np.array_equal(nxt, root):
            break
        root = nxt
    # map each root node to the smallest leaf under it
    first = {}
    for i, r in enumerate(root):
        first.setdefault(int(r), i)
    return np.array([first[int(r)] for r in root])


def relabel(raw: np.ndarray, latitude: Optional[np.ndarray] = None) -> np.ndarray:
    """Map raw cluster ids to ``1..K``.

    With latitudes, clusters are ordered by mean absolute latitude; otherwise
    by size, largest first. Remaining ties go to the smallest member index.
    """
    raw = np.asarray(raw)
    ids = sorted(set(raw.tolist()), key=lambda c: int(np.flatnonzero(raw == c)[0]))
    if latitude is not None:
        lat = np.abs(np.asarray(latitude, dtype=float))
        keys = {c: (lat[raw == c].mean(), int(np.flatnonzero(raw == c)[0])) for c in ids}
    else:
        keys = {c: (-(raw == c).sum(), int(np.flatnonzero(raw == c)[0])) for c in ids}
    order = sorted(ids, key=keys.__getitem__)
    label = {c: k + 1 for k, c in enumerate(order)}
    return np.array([label[c] for c in raw.tolist()], dtype=int)


def cluster(dist, K: int, latitude=None, history: Optional[np.ndarray] = None) -> ClusterResult:
    """Ward clustering cut to exactly ``K`` clusters.

    Parameters
    ----------
    dist : (n, n) array
        Symmetric distance matrix.
    K : int
        Number of clusters, ``1 <= K <= n``.
    latitude : array, optional
        Sample latitudes, used only to order the output labels.
    history : array, optional
        A merge history already computed for ``dist``.
    """
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    if not 1 <= K <= n:
        raise ConfigError(f"K must lie in 1..{n}, got {K}")
    if history is None:
        history = ward_linkage(dist)
    memberships = relabel(cut_tree(history, n, K), latitude)
    return ClusterResult(history, memberships, K)


def within_cluster_distance(dist, memberships) -> float:
    """Sum of ``dist`` over ordered pairs of distinct samples sharing a cluster."""
    dist = np.asarray(dist, dtype=float)
    memberships = np.asarray(memberships)
    if memberships.shape != (dist.shape[0],):
        raise ConfigError("memberships do not match the distance matrix")
    total = 0.0
    for label in np.unique(memberships):
        idx = np.flatnonzero(memberships == label)
        # diagonal is zero, so the full block sum equals the i1 != i2 sum
        total += float(dist[np.ix_(idx, idx)].sum())
    return total
