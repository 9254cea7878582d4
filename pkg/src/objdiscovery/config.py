"""Pipeline configuration and its flat ``key = value`` text format."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict

from .phm import HoughGrid
from .proposals import GeneratorConfig


class ConfigError(ValueError):
    """Invalid configuration key or value."""


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 10
    potential_regions: int = 5
    iterations: int = 5
    retrieval_top_regions: int = 20
    part_count: int = 5
    containment_area_ratio: float = 0.5
    containment_overlap: float = 0.8
    dx_bins: int = 21
    dy_bins: int = 21
    dscale_bins: int = 9
    translation_range: float = 1.0
    log_scale_range: float = 2.0
    sigma: float = 1.0
    truncation: float = 2.0
    appearance_threshold: float = 1e-4
    appearance_centered: bool = True
    appearance_power: float = 2.0
    max_proposals: int = 4000
    min_scale: float = 0.1
    min_box_side: float = 16.0
    patch_size: int = 64
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type == "bool" and not isinstance(value, bool):
                raise ConfigError(f"{f.name} must be true or false, got {value!r}")
            if f.type == "int" and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"{f.name} must be an integer, got {value!r}")
            if f.type == "float":
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{f.name} must be a number, got {value!r}")
                if not math.isfinite(value):
                    raise ConfigError(f"{f.name} must be finite")
                object.__setattr__(self, f.name, float(value))
        _at_least(self, "k", 1)
        _at_least(self, "potential_regions", 1)
        _at_least(self, "iterations", 1)
        _at_least(self, "retrieval_top_regions", 1)
        _at_least(self, "part_count", 0)
        _at_least(self, "dx_bins", 1)
        _at_least(self, "dy_bins", 1)
        _at_least(self, "dscale_bins", 1)
        _at_least(self, "max_proposals", 1)
        _at_least(self, "workers", 1)
        _at_least(self, "seed", 0)
        _open_unit(self, "containment_area_ratio", upper_closed=True)
        _open_unit(self, "containment_overlap", upper_closed=True)
        _open_unit(self, "min_scale", upper_closed=True)
        for name in ("translation_range", "log_scale_range", "sigma", "truncation"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.appearance_threshold < 1:
            raise ConfigError("appearance_threshold must lie in [0, 1)")
        if self.appearance_power <= 0:
            raise ConfigError("appearance_power must be positive")
        if self.min_box_side < 0:
            raise ConfigError("min_box_side must be >= 0")
        if self.patch_size < 8 or self.patch_size % 8:
            raise ConfigError("patch_size must be a positive multiple of 8")

    @property
    def grid(self) -> HoughGrid:
        return HoughGrid(self.dx_bins, self.dy_bins, self.dscale_bins, self.translation_range,
                         self.log_scale_range, self.sigma, self.truncation)

    @property
    def generator(self) -> GeneratorConfig:
        return GeneratorConfig(min_scale=self.min_scale, min_box_side=self.min_box_side,
                               max_proposals=self.max_proposals)

    def replace(self, **changes) -> "PipelineConfig":
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        lines = ["# effective configuration"]
        lines += [f"{key} = {value!r}" for key, value in self.to_dict().items()]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "PipelineConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                values[key] = _PARSERS[types[key]](value)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
        return cls(**values)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(text)


_PARSERS = {"int": int, "float": float, "bool": _parse_bool}


def _at_least(cfg, name, minimum):
    if getattr(cfg, name) < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {getattr(cfg, name)}")


def _open_unit(cfg, name, upper_closed=False):
    value = getattr(cfg, name)
    ok = 0 < value <= 1 if upper_closed else 0 < value < 1
    if not ok:
        raise ConfigError(f"{name} must lie in (0, 1], got {value}")
