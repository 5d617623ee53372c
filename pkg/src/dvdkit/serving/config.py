"""Serving configuration, read from an INI-style key/value file.

``DVD_CONFIG`` in the environment overrides the path passed on the command
line. Unknown keys are rejected so typos do not silently fall back to
defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

from ..errors import InvalidConfig

TOPOLOGIES = ("monolith", "dvd", "dvd_vir")


@dataclass(frozen=True)
class ComputeProfile:
    """Work units per unit of load; one unit = 4096 multiply-accumulates."""

    vision_work_per_tile: int = 5000
    prefill_work_per_token: int = 30
    decode_work_per_token: int = 600

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) <= 0:
                raise InvalidConfig(f"{f.name} must be positive")

    def scaled(self, factor: float) -> "ComputeProfile":
        return ComputeProfile(*(max(1, round(getattr(self, f.name) * factor))
                                for f in dataclasses.fields(self)))


LIGHT_PROFILE = ComputeProfile(1, 1, 1)


@dataclass(frozen=True)
class ServingConfig:
    topology: str = "dvd"
    host: str = "127.0.0.1"
    vision_port: int = 0
    language_port: int = 0
    monolith_port: int = 0
    language_host: str = "127.0.0.1"
    tile_size: int = 448
    max_tiles: int = 12
    feature_dim: int = 8
    encoder_seed: int = 7
    vocab: int = 65536
    seed: int = 0
    router: str = "task"  # "task" (trained at startup), "pinned" (always 1/4), or a checkpoint path
    router_checkpoint: str = ""
    router_threshold: float = 0.5
    vision_workers: int = 2
    language_workers: int = 2
    monolith_workers: int = 2
    batch_window_ms: float = 2.0
    batch_max_tiles: int = 8
    inflight_window: int = 64
    tcp_nodelay: bool = True
    kernel_backend: str = ""
    profile: ComputeProfile = field(default_factory=ComputeProfile)

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise InvalidConfig(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if self.max_tiles < 1 or self.tile_size <= 0:
            raise InvalidConfig("tile_size and max_tiles must be positive")
        if not 0.0 < self.router_threshold < 1.0:
            raise InvalidConfig("router_threshold must lie in (0, 1)")
        for name in ("vision_workers", "language_workers", "monolith_workers", "batch_max_tiles",
                     "inflight_window"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")

    def replace(self, **kw) -> "ServingConfig":
        return dataclasses.replace(self, **kw)

    @property
    def backend(self) -> str | None:
        return self.kernel_backend or None


def _coerce(kind, raw: str):
    if kind is bool or kind == "bool":
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if kind is int or kind == "int":
        return int(raw)
    if kind is float or kind == "float":
        return float(raw)
    return raw.strip()


def load_config(path: str | os.PathLike | None = None, **overrides) -> ServingConfig:
    """Load ``[serving]`` and ``[profile]`` sections; missing file -> defaults."""
    path = os.environ.get("DVD_CONFIG") or path
    values: dict = {}
    profile: dict = {}
    if path:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise InvalidConfig(f"cannot read config file {path}")
        types = {f.name: f.type for f in dataclasses.fields(ServingConfig)}
        ptypes = {f.name: f.type for f in dataclasses.fields(ComputeProfile)}
        for section in parser.sections():
            if section not in ("serving", "profile"):
                raise InvalidConfig(f"unknown section [{section}]")
        if parser.has_section("serving"):
            for key, raw in parser.items("serving"):
                if key not in types or key == "profile":
                    raise InvalidConfig(f"unknown serving key {key!r}")
                values[key] = _coerce(types[key], raw)
        if parser.has_section("profile"):
            for key, raw in parser.items("profile"):
                if key not in ptypes:
                    raise InvalidConfig(f"unknown profile key {key!r}")
                profile[key] = _coerce(ptypes[key], raw)
    prof_override = overrides.pop("profile", None)
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg_profile = prof_override or ComputeProfile(**profile)
    return ServingConfig(profile=cfg_profile, **values)


def dump_config(cfg: ServingConfig) -> str:
    lines = ["[serving]"]
    for f in dataclasses.fields(ServingConfig):
        if f.name == "profile":
            continue
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    lines.append("")
    lines.append("[profile]")
    for f in dataclasses.fields(ComputeProfile):
        lines.append(f"{f.name} = {getattr(cfg.profile, f.name)}")
    return "\n".join(lines) + "\n"
