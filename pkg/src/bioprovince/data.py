"""Sample and grid ingestion.

Compositions are closed (rows sum to one) and made strictly positive on load,
since every downstream log-ratio needs positive parts.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import DataError

logger = logging.getLogger(__name__)

META_COLUMNS = ("sample_id", "latitude", "depth", "temperature", "salinity", "cruise")
GRID_COLUMNS = ("latitude", "depth", "temperature", "salinity")


@dataclass(frozen=True, eq=False)
class CompositionTable:
    """n samples by d ASVs of strictly positive relative abundances."""

    sample_ids: tuple
    asv_ids: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in self.sample_ids))
        object.__setattr__(self, "asv_ids", tuple(str(a) for a in self.asv_ids))
        n, d = values.shape if values.ndim == 2 else (0, 0)
        if values.ndim != 2 or n < 2 or d < 2:
            raise DataError(f"composition table must be at least 2x2, got shape {values.shape}")
        if len(self.sample_ids) != n or len(self.asv_ids) != d:
            raise DataError("id lists do not match the value matrix shape")
        _require_unique(self.sample_ids, "sample_id")
        _require_unique(self.asv_ids, "asv_id")
        if not np.all(np.isfinite(values)) or values.min() <= 0:
            raise DataError("composition entries must be finite and strictly positive")
        if np.max(np.abs(values.sum(axis=1) - 1.0)) > 1e-12:
            raise DataError("composition rows must sum to 1")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class SampleMeta:
    """Per-sample metadata, stored column-wise in composition-table order."""

    sample_ids: tuple
    latitude: np.ndarray
    depth: np.ndarray
    temperature: np.ndarray
    salinity: np.ndarray
    cruise: tuple
    external_province: tuple = field(default=None)

    def __post_init__(self):
        n = len(self.sample_ids)
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in self.sample_ids))
        for name in ("latitude", "depth", "temperature", "salinity"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise DataError(f"meta column {name} has wrong length")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "cruise", tuple(str(c) for c in self.cruise))
        if len(self.cruise) != n:
            raise DataError("meta column cruise has wrong length")
        ext = self.external_province
        ext = (None,) * n if ext is None else tuple(None if e is None else str(e) for e in ext)
        if len(ext) != n:
            raise DataError("meta column external_province has wrong length")
        object.__setattr__(self, "external_province", ext)
        _require_unique(self.sample_ids, "sample_id")
        if np.any(np.abs(self.latitude) > 90) or not np.all(np.isfinite(self.latitude)):
            raise DataError("latitude out of range")
        if not np.all(np.isfinite(self.depth)):
            raise DataError("depth must be finite")

    def __len__(self):
        return len(self.sample_ids)

    def subset(self, idx) -> "SampleMeta":
        idx = np.asarray(idx)
        return SampleMeta(
            sample_ids=[self.sample_ids[i] for i in idx],
            latitude=self.latitude[idx],
            depth=self.depth[idx],
            temperature=self.temperature[idx],
            salinity=self.salinity[idx],
            cruise=[self.cruise[i] for i in idx],
            external_province=[self.external_province[i] for i in idx],
        )


@dataclass(frozen=True, eq=False)
class GridSpec:
    grid_ids: tuple
    latitude: np.ndarray
    depth: np.ndarray
    temperature: np.ndarray
    salinity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid_ids", tuple(str(g) for g in self.grid_ids))
        b = len(self.grid_ids)
        if b < 1:
            raise DataError("empty grid")
        for name in GRID_COLUMNS:
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (b,):
                raise DataError(f"grid column {name} has wrong length")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"grid column {name} has non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.grid_ids)


def _require_unique(ids: Sequence[str], what: str) -> None:
    seen = set()
    for s in ids:
        if s in seen:
            raise DataError(f"duplicate {what}: {s}")
        seen.add(s)


def closure(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    sums = values.sum(axis=-1, keepdims=True)
    if np.any(sums <= 0):
        raise DataError("a row of all zeros cannot be closed")
    return values / sums


def parse_zero_policy(policy: str) -> tuple[str, Optional[float]]:
    """Parse ``multiplicative`` or ``pseudocount:<value>``."""
    if policy == "multiplicative":
        return "multiplicative", None
    if policy.startswith("pseudocount:"):
        try:
            value = float(policy.split(":", 1)[1])
        except ValueError:
            raise DataError(f"bad pseudocount in zero policy {policy!r}") from None
        if not value > 0 or not math.isfinite(value):
            raise DataError("pseudocount must be a positive number")
        return "pseudocount", value
    raise DataError(f"unknown zero policy {policy!r}")


def replace_zeros(values: np.ndarray, zero_policy: str = "multiplicative") -> np.ndarray:
    """Close rows and replace zero cells.

    ``multiplicative`` sets every zero of the closed table to half the smallest
    nonzero fraction in the whole table, then re-closes. ``pseudocount:v`` puts
    ``v`` into the zero cells of the raw input before closing.
    """
    kind, pseudo = parse_zero_policy(zero_policy)
    values = np.asarray(values, dtype=float)
    if kind == "pseudocount":
        if np.any(values.sum(axis=1) <= 0):
            raise DataError("a row of all zeros cannot be closed")
        return closure(np.where(values == 0, pseudo, values))
    closed = closure(values)
    if np.any(closed == 0):
        delta = 0.5 * closed[closed > 0].min()
        closed = closure(np.where(closed == 0, delta, closed))
    return closed


def _read_csv(path, what: str) -> pd.DataFrame:
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError(f"empty {what}") from None
    except FileNotFoundError:
        raise DataError(f"{what} file not found: {path}") from None
    df.columns = [c.strip() for c in df.columns]
    return df


def _numeric(df: pd.DataFrame, col: str, what: str) -> np.ndarray:
    try:
        return df[col].astype(float).to_numpy()
    except ValueError:
        bad = [v for v in df[col] if not _is_number(v)]
        raise DataError(f"non-numeric value {bad[0]!r} in {what} column {col}") from None


def _is_number(v: str) -> bool:
    try:
        float(v)
        return True
    except ValueError:
        return False


def load_samples(
    composition_csv_path,
    meta_csv_path,
    zero_policy: str = "multiplicative",
    input_kind: str = "auto",
) -> tuple[CompositionTable, SampleMeta]:
    """Read a composition table and its metadata.

    Parameters
    ----------
    composition_csv_path, meta_csv_path : path-like
        ``sample_id,<asv...>`` and
        ``sample_id,latitude,depth,temperature,salinity,cruise[,external_province]``.
    zero_policy : str
        ``multiplicative`` or ``pseudocount:<value>``.
    input_kind : {"auto", "counts", "fractions"}
        ``auto`` treats the table as counts when any row sums above 1.5.
        Both kinds are closed the same way; the flag only decides how a
        pseudocount is interpreted and is reported in logs.

    Returns
    -------
    CompositionTable, SampleMeta
        In the composition file's row order.
    """
    comp = _read_csv(composition_csv_path, "composition table")
    if comp.shape[0] == 0:
        raise DataError("empty composition table")
    if comp.columns[0] != "sample_id":
        raise DataError("composition CSV must start with a sample_id column")
    asv_ids = list(comp.columns[1:])
    sample_ids = list(comp["sample_id"])
    _require_unique(sample_ids, "sample_id")
    raw = np.column_stack([_numeric(comp, c, "composition") for c in asv_ids]) if asv_ids else np.empty((len(comp), 0))
    if raw.shape[1] < 2:
        raise DataError("composition table needs at least 2 ASV columns")
    if not np.all(np.isfinite(raw)) or np.any(raw < 0):
        raise DataError("composition values must be finite and nonnegative")
    if np.any(raw.sum(axis=1) == 0):
        bad = sample_ids[int(np.flatnonzero(raw.sum(axis=1) == 0)[0])]
        raise DataError(f"sample {bad} is a row of all zeros")
    if input_kind not in ("auto", "counts", "fractions"):
        raise DataError(f"unknown input kind {input_kind!r}")
    if input_kind == "auto":
        input_kind = "counts" if np.any(raw.sum(axis=1) > 1.5) else "fractions"
    logger.info("composition table read as %s (%d x %d)", input_kind, *raw.shape)
    values = replace_zeros(raw, zero_policy)
    table = CompositionTable(sample_ids, asv_ids, values)

    meta_df = _read_csv(meta_csv_path, "meta table")
    missing = [c for c in META_COLUMNS if c not in meta_df.columns]
    if missing:
        raise DataError(f"meta CSV missing column(s): {', '.join(missing)}")
    _require_unique(list(meta_df["sample_id"]), "sample_id")
    meta_df = meta_df.set_index("sample_id", drop=False)
    absent = [s for s in sample_ids if s not in meta_df.index]
    if absent:
        raise DataError(f"missing meta row for sample {absent[0]}")
    extra = len(meta_df) - len(sample_ids)
    if extra:
        logger.warning("ignoring %d meta rows without compositions", extra)
    meta_df = meta_df.loc[sample_ids]
    numeric = {c: _numeric(meta_df, c, "meta") for c in ("latitude", "depth", "temperature", "salinity")}
    if np.any(np.abs(numeric["latitude"]) > 90):
        raise DataError("latitude out of range")
    ext = None
    if "external_province" in meta_df.columns:
        ext = [v if v.strip() else None for v in meta_df["external_province"]]
    meta = SampleMeta(
        sample_ids=sample_ids,
        cruise=list(meta_df["cruise"]),
        external_province=ext,
        **numeric,
    )
    return table, meta


def subsample_asvs(table: CompositionTable, fraction: float, seed: int) -> CompositionTable:
    """Keep ``floor(d * fraction)`` ASV columns, the same ones for every sample.

    Columns are drawn without replacement from ``numpy.random.default_rng(seed)``
    and kept in their original order; rows are re-closed.
    """
    if not 0 < fraction <= 1:
        raise DataError(f"fraction must lie in (0, 1], got {fraction}")
    m = int(math.floor(table.d * fraction))
    if m < 2:
        raise DataError(f"subsampling {table.d} ASVs at {fraction} leaves fewer than 2")
    if m == table.d:
        return table
    rng = np.random.default_rng(seed)
    cols = np.sort(rng.choice(table.d, size=m, replace=False))
    return CompositionTable(
        table.sample_ids,
        [table.asv_ids[c] for c in cols],
        closure(table.values[:, cols]),
    )


def load_grid(grid_csv_path) -> GridSpec:
    df = _read_csv(grid_csv_path, "grid")
    if df.shape[0] == 0:
        raise DataError("empty grid")
    missing = [c for c in GRID_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"grid CSV missing column(s): {', '.join(missing)}")
    ids = list(df["grid_id"]) if "grid_id" in df.columns else [str(i) for i in range(len(df))]
    return GridSpec(grid_ids=ids, **{c: _numeric(df, c, "grid") for c in GRID_COLUMNS})


def load_group_map(path) -> dict[str, str]:
    df = _read_csv(path, "group map")
    if list(df.columns[:2]) != ["asv_id", "group"]:
        raise DataError("group map CSV must have header asv_id,group")
    return dict(zip(df["asv_id"], df["group"]))
