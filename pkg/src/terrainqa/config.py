"""Plain-text ``key = value`` run configuration.

Keys are either generation settings (``seed``, ``per_category_count``,
``min_score_margin``, ...), SVF/viewshed parameters (``svf.n_azimuths``,
``viewshed.max_radius``) or metric weights addressed by group
(``weights.density.bcr``, ``weights.sky_visibility.edge_penalty``).
Blank lines and ``#`` comments are ignored.  Lists are comma separated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .metrics import MetricWeights
from .qa import GenConfig
from .svf import SvfParams, ViewshedParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    weights: MetricWeights = field(default_factory=MetricWeights)
    svf: SvfParams = field(default_factory=SvfParams)
    viewshed: ViewshedParams = field(default_factory=ViewshedParams)


def _coerce(raw: str, current):
    """Parse ``raw`` into the type of the field's current value."""
    raw = raw.strip()
    if isinstance(current, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if current and isinstance(current[0], (int, float)):
            return tuple(float(p) for p in parts)
        return tuple(parts)
    if current is None:
        return None if raw.lower() in ("", "none") else float(raw)
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def _set(obj, path: list[str], raw: str, key: str):
    names = {f.name for f in fields(obj)}
    head = path[0]
    if head not in names:
        raise ConfigError(f"unknown config key {key!r}")
    current = getattr(obj, head)
    if len(path) > 1:
        if not dataclasses.is_dataclass(current):
            raise ConfigError(f"unknown config key {key!r}")
        try:
            return replace(obj, **{head: _set(current, path[1:], raw, key)})
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    if dataclasses.is_dataclass(current):
        raise ConfigError(f"config key {key!r} names a group, not a value")
    optional = next(f for f in fields(obj) if f.name == head).default is None
    try:
        value = None if optional and raw.strip().lower() in ("", "none") else _coerce(raw, current)
        return replace(obj, **{head: value})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def apply_overrides(cfg: RunConfig, pairs: dict[str, str]) -> RunConfig:
    """Apply ``key -> raw string`` overrides.  Bare keys address GenConfig."""
    for key, raw in pairs.items():
        path = key.split(".")
        if path[0] not in ("gen", "weights", "svf", "viewshed"):
            path = ["gen"] + path
        cfg = _set(cfg, path, raw, key)
    return cfg


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    pairs: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        pairs[key] = value
    return pairs


def load_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the file, then explicit overrides (e.g. CLI flags)."""
    cfg = RunConfig()
    if path is not None:
        cfg = apply_overrides(cfg, parse_config(Path(path).read_text(encoding="utf-8"), str(path)))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
