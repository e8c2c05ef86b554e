"""Run configuration: defaults, ``key = value`` files, and validation."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .stability import FRACTION, REPLICATES
from .tuning import DEPTH_WINDOW, LAT_WINDOW, N_REPLICATES, check_knn_k

PATH_FIELDS = ("composition", "meta", "grid", "group_map", "external_labels", "memberships")
LIST_FIELDS = {"alphas": float, "Ks": int}


@dataclass
class RunConfig:
    composition: Optional[str] = None
    meta: Optional[str] = None
    grid: Optional[str] = None
    group_map: Optional[str] = None
    external_labels: Optional[str] = None
    memberships: Optional[str] = None
    r: Optional[float] = None
    alpha: Optional[float] = None
    K: Optional[int] = None
    k: Optional[int] = None
    zero_policy: str = "multiplicative"
    input_kind: str = "auto"
    lat_window: float = LAT_WINDOW
    depth_window: float = DEPTH_WINDOW
    p_threshold: float = 0.05
    weights: str = "pairs"
    L: int = N_REPLICATES
    alphas: list = field(default_factory=lambda: [round(0.1 * i, 10) for i in range(11)])
    Ks: list = field(default_factory=lambda: list(range(1, 16)))
    replicates: int = REPLICATES
    fraction: float = FRACTION
    seed: int = 0
    rescale_domain: str = "union"
    out: str = "bioprovince_out"

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if f.name in LIST_FIELDS:
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(name: str, raw):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    if raw is None:
        return None
    if name in LIST_FIELDS:
        if isinstance(raw, (list, tuple)):
            items = raw
        else:
            items = [s for s in str(raw).split(",") if s.strip()]
        try:
            return [LIST_FIELDS[name](str(s).strip()) for s in items]
        except ValueError:
            raise ConfigError(f"bad list value for {name}: {raw!r}") from None
    t = types[name]
    conv = float if "float" in t else int if "int" in t else str
    try:
        return conv(raw.strip() if isinstance(raw, str) else raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the config file, then non-None ``overrides``."""
    values = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
    for key, v in (overrides or {}).items():
        if v is not None:
            values[key] = _coerce(key, v)
    return RunConfig(**values)


def validate(cfg: RunConfig, need: tuple = (), files: tuple = ()) -> None:
    """Check hyperparameter ranges and that required inputs exist."""
    for name in need:
        if getattr(cfg, name) is None:
            raise ConfigError(f"missing required setting: {name}")
    for name in files:
        path = getattr(cfg, name)
        if path is None:
            raise ConfigError(f"missing required input: {name}")
    for name in PATH_FIELDS:
        path = getattr(cfg, name)
        if path is not None and not os.path.isfile(path):
            raise ConfigError(f"{name} file does not exist: {path}")
    if cfg.alpha is not None and not 0 <= cfg.alpha <= 1:
        raise ConfigError(f"alpha must lie in [0, 1], got {cfg.alpha}")
    if cfg.r is not None and not cfg.r > 0:
        raise ConfigError(f"r must be positive, got {cfg.r}")
    if cfg.K is not None and cfg.K < 1:
        raise ConfigError(f"K must be at least 1, got {cfg.K}")
    if cfg.k is not None:
        check_knn_k(cfg.k)
    if not 0 < cfg.fraction <= 1:
        raise ConfigError(f"fraction must lie in (0, 1], got {cfg.fraction}")
    if cfg.replicates < 1 or cfg.L < 1:
        raise ConfigError("replicates and L must be at least 1")
    if cfg.lat_window <= 0 or cfg.depth_window <= 0:
        raise ConfigError("windows must be positive")
    if cfg.weights not in ("pairs", "samples"):
        raise ConfigError(f"weights must be 'pairs' or 'samples', got {cfg.weights!r}")
    if cfg.rescale_domain not in ("union", "samples"):
        raise ConfigError(f"rescale_domain must be 'union' or 'samples', got {cfg.rescale_domain!r}")
