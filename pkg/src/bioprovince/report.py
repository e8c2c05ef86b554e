"""Summaries against external labels, grouped compositions, and planted data."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import CompositionTable, GridSpec, SampleMeta, closure
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CrossTab:
    row_labels: list
    col_labels: list
    values: np.ndarray
    n_excluded: int = 0


def cross_tabulate(memberships, external_labels, meta: Optional[SampleMeta] = None, latitude=None) -> CrossTab:
    """Row-normalised table of external provinces against estimated ones.

    Rows run north to south by the mean latitude of their samples. Columns
    follow the rows: each row's best-matching estimated province is placed
    next if not already placed, and unplaced provinces follow in label order.
    Samples without an external label are left out.
    """
    memberships = np.asarray(memberships)
    labels = list(external_labels)
    if latitude is None:
        if meta is None:
            raise ConfigError("cross_tabulate needs sample latitudes")
        latitude = meta.latitude
    latitude = np.asarray(latitude, dtype=float)
    if not (len(labels) == len(memberships) == len(latitude)):
        raise DataError("memberships, labels and latitudes differ in length")
    keep = np.array([lab is not None and str(lab) != "" for lab in labels], dtype=bool)
    n_excluded = int((~keep).sum())
    if n_excluded:
        logger.warning("%d samples without an external label left out of the cross-tabulation", n_excluded)
    if not keep.any():
        raise DataError("no labeled samples to cross-tabulate")
    ext = np.array([str(lab) for lab, k in zip(labels, keep) if k], dtype=object)
    est = memberships[keep]
    lat = latitude[keep]
    rows = sorted(set(ext.tolist()), key=lambda e: (-lat[ext == e].mean(), e))
    est_levels = sorted(set(est.tolist()))
    counts = np.array([[np.sum((ext == r) & (est == c)) for c in est_levels] for r in rows], dtype=float)
    fractions = counts / counts.sum(axis=1, keepdims=True)
    cols = []
    for i in range(len(rows)):
        best = est_levels[int(np.argmax(fractions[i]))]
        if best not in cols:
            cols.append(best)
    cols += [c for c in est_levels if c not in cols]
    order = [est_levels.index(c) for c in cols]
    return CrossTab(rows, cols, fractions[:, order], n_excluded)


def mean_cluster_composition(table: CompositionTable, memberships, group_map: Optional[dict] = None):
    """Mean composition of each cluster, summed within ASV groups.

    ASVs missing from ``group_map`` fall into ``"other"``. Without a map every
    ASV is its own group.

    Returns
    -------
    clusters : list
    groups : list
        Group names in first-seen ASV order, ``"other"`` last.
    values : (n_clusters, n_groups) ndarray
    """
    memberships = np.asarray(memberships)
    if memberships.shape != (table.n,):
        raise DataError("memberships do not match the composition table")
    if group_map is None:
        asv_group = list(table.asv_ids)
    else:
        asv_group = [group_map.get(a, "other") for a in table.asv_ids]
    groups = list(dict.fromkeys(g for g in asv_group if g != "other"))
    if "other" in asv_group:
        groups.append("other")
    member = np.zeros((table.d, len(groups)))
    member[np.arange(table.d), [groups.index(g) for g in asv_group]] = 1.0
    clusters = sorted(set(memberships.tolist()))
    values = np.empty((len(clusters), len(groups)))
    for row, c in enumerate(clusters):
        rows = table.values[memberships == c]
        if len(rows) == 0:
            raise DataError(f"cluster {c} is empty")
        values[row] = rows.mean(axis=0) @ member
    return clusters, groups, values


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-province generator settings.

    ``bio_scale`` is the metres of depth that change the planted biology as
    much as one degree of latitude does.
    """

    n_provinces: int = 3
    n_samples: int = 150
    n_asvs: int = 300
    noise: float = 0.05
    seed: int = 0
    n_cruises: int = 3
    n_grid: int = 2000
    lat_range: tuple = (-30.0, 30.0)
    depth_max: float = 200.0
    separation: float = 300.0
    gradient: float = 1.0
    bio_scale: float = 3.0


@dataclass(frozen=True, eq=False)
class SyntheticData:
    table: CompositionTable
    meta: SampleMeta
    grid: GridSpec
    true_labels: np.ndarray
    grid_labels: np.ndarray
    grid_margin: np.ndarray  # distance to the nearest province boundary, in depth metres


def _grid_shape(b: int) -> tuple[int, int]:
    target = np.sqrt(b / 2)
    divisors = [q for q in range(1, b + 1) if b % q == 0]
    n_depth = min(divisors, key=lambda q: (abs(q - target), q))
    return b // n_depth, n_depth


class _Layout:
    """Surface latitude bands, plus one deep province under a wavy floor when there are 3 or more."""

    def __init__(self, spec: SyntheticSpec):
        self.p = spec.n_provinces
        self.lo, self.hi = spec.lat_range
        self.depth_max = spec.depth_max
        self.scale = spec.bio_scale
        self.n_bands = self.p - 1 if self.p >= 3 else self.p
        self.edges = self.lo + (self.hi - self.lo) * np.arange(1, self.n_bands) / self.n_bands

    def floor(self, lat):
        span = self.hi - self.lo
        return self.depth_max * (0.55 + 0.1 * np.cos(2 * np.pi * (lat - self.lo) / span))

    def label(self, lat, depth):
        band = np.searchsorted(self.edges, lat, side="right")
        if self.p >= 3:
            band = np.where(depth > self.floor(lat), self.p - 1, band)
        return band

    def margin(self, lat, depth):
        m = np.full(np.shape(lat), np.inf)
        if self.p >= 3:
            dz = np.abs(depth - self.floor(lat))
            m = np.minimum(m, dz)
            surface = depth <= self.floor(lat)
        else:
            surface = np.ones(np.shape(lat), dtype=bool)
        for e in self.edges:
            m = np.where(surface, np.minimum(m, self.scale * np.abs(lat - e)), m)
        return m


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> SyntheticData:
    """Planted latitude-depth provinces with compositions and abiotic fields.

    Provinces are contiguous: latitude bands near the surface and, for three or
    more provinces, a deep province below a wavy boundary. Each province has a
    log-ratio centre; samples add a smooth latitude/depth gradient and Gaussian
    noise before exponentiation and closure. Temperature falls with absolute
    latitude and depth; salinity carries a per-province offset.
    """
    if spec.n_provinces < 1:
        raise ConfigError("need at least one province")
    if spec.n_provinces > spec.n_samples:
        raise ConfigError("more provinces than samples")
    if spec.n_cruises < 1 or spec.n_asvs < 2 or spec.n_samples < 2 or spec.n_grid < 1:
        raise ConfigError("infeasible synthetic spec")
    rng = np.random.default_rng(spec.seed)
    layout = _Layout(spec)
    lo, hi = spec.lat_range
    n, d, P = spec.n_samples, spec.n_asvs, spec.n_provinces

    per = np.full(spec.n_cruises, n // spec.n_cruises)
    per[: n % spec.n_cruises] += 1
    seg = (hi - lo) / spec.n_cruises
    lat = np.concatenate([rng.uniform(lo + c * seg, lo + (c + 1) * seg, m) for c, m in enumerate(per)])
    depth = rng.uniform(0, spec.depth_max, n)
    cruise = [f"C{c + 1}" for c, m in enumerate(per) for _ in range(m)]
    labels = layout.label(lat, depth)

    centres = rng.standard_normal((P, d)) * spec.separation / np.sqrt(2 * d)
    u = rng.standard_normal(d)
    v = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)

    def log_ratios(la, de, lab, eps):
        return centres[lab] + spec.gradient * (la[:, None] * u + (de / spec.bio_scale)[:, None] * v) + spec.noise * eps

    x = log_ratios(lat, depth, labels, rng.standard_normal((n, d)))
    x -= x.max(axis=1, keepdims=True)
    values = closure(np.exp(x))

    salinity_offset = np.linspace(0.0, 1.5, P)

    def abiotic(la, de, lab, m):
        temp = 28 - 0.3 * np.abs(la) - 0.08 * de + 0.3 * rng.standard_normal(m)
        sal = 34 + salinity_offset[lab] + 0.003 * de + 0.05 * rng.standard_normal(m)
        return temp, sal

    temp, sal = abiotic(lat, depth, labels, n)
    n_lat, n_depth = _grid_shape(spec.n_grid)
    g_lat, g_depth = np.meshgrid(
        np.linspace(lo, hi, n_lat), np.linspace(0, spec.depth_max, n_depth), indexing="ij"
    )
    g_lat, g_depth = g_lat.ravel(), g_depth.ravel()
    g_labels = layout.label(g_lat, g_depth)
    g_temp, g_sal = abiotic(g_lat, g_depth, g_labels, len(g_lat))

    width = len(str(n))
    ids = [f"S{i:0{width}d}" for i in range(n)]
    table = CompositionTable(ids, [f"ASV{j:04d}" for j in range(d)], values)
    meta = SampleMeta(ids, lat, depth, temp, sal, cruise)
    gwidth = len(str(len(g_lat)))
    grid = GridSpec([f"G{j:0{gwidth}d}" for j in range(len(g_lat))], g_lat, g_depth, g_temp, g_sal)
    return SyntheticData(table, meta, grid, labels + 1, g_labels + 1, layout.margin(g_lat, g_depth))
