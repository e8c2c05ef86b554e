"""Biological, spatial and mixed distance matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CompositionTable, SampleMeta
from .errors import ConfigError, DataError, NumericalError
from .numerics import operator_norm


@dataclass(frozen=True)
class MixParams:
    alpha: float
    r: float

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.r > 0:
            raise ConfigError(f"r must be positive, got {self.r}")


def clr(x) -> np.ndarray:
    """Centred log-ratio transform along the last axis."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DataError("compositions must be strictly positive")
    logx = np.log(x)
    return logx - logx.mean(axis=-1, keepdims=True)


def aitchison_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise DataError("compositions must be 1-d vectors of equal length")
    if p.size < 2:
        raise DataError("compositions need at least 2 parts")
    diff = clr(p) - clr(q)
    return float(np.sqrt(diff @ diff))


def pairwise_euclidean(coords: np.ndarray) -> np.ndarray:
    # one independent sum per entry: no Gram-matrix shortcut, so the diagonal
    # is exactly zero and both triangles hold identical values
    n = coords.shape[0]
    out = np.zeros((n, n))
    for i in range(n - 1):
        diff = coords[i + 1 :] - coords[i]
        row = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        out[i, i + 1 :] = row
        out[i + 1 :, i] = row
    return out


def bio_distance_matrix(table: CompositionTable | np.ndarray) -> np.ndarray:
    """Pairwise Aitchison distances between the rows of a composition table."""
    values = table.values if isinstance(table, CompositionTable) else np.asarray(table, dtype=float)
    return pairwise_euclidean(clr(values))


def spatial_coordinates(latitude, depth, r: float) -> np.ndarray:
    if not r > 0:
        raise ConfigError(f"r must be positive, got {r}")
    return np.column_stack([r * np.asarray(latitude, dtype=float), np.asarray(depth, dtype=float)])


def spatial_distance_matrix(meta: SampleMeta, r: float) -> np.ndarray:
    """``sqrt(r^2 dlat^2 + ddepth^2)`` between all sample pairs."""
    return pairwise_euclidean(spatial_coordinates(meta.latitude, meta.depth, r))


def scale_by_norm(matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    norm = operator_norm(matrix)
    if norm == 0:
        return np.zeros_like(matrix)
    return matrix / norm


def mix_distance_matrix(d_bio, d_spatial, alpha: float) -> np.ndarray:
    """Convex combination of the two matrices after scaling each to unit spectral norm."""
    d_bio = np.asarray(d_bio, dtype=float)
    d_spatial = np.asarray(d_spatial, dtype=float)
    if d_bio.shape != d_spatial.shape:
        raise NumericalError(f"distance matrices differ in size: {d_bio.shape} vs {d_spatial.shape}")
    if not 0 <= alpha <= 1:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return mix_scaled(scale_by_norm(d_bio), scale_by_norm(d_spatial), alpha)


def mix_scaled(h_bio: np.ndarray, h_spatial: np.ndarray, alpha: float) -> np.ndarray:
    if alpha == 0:
        return h_bio.copy()
    if alpha == 1:
        return h_spatial.copy()
    return (1 - alpha) * h_bio + alpha * h_spatial
