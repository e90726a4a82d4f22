"""Pipeline configuration: TOML parsing, strict validation, sweep overrides.

Every parameter has a built-in default, so a config file is optional; when
one is given, unknown sections or keys are rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .akd import AkdParams
from .cba import CbaParams
from .core import ConfigError
from .dacg import DacgParams
from .sicd import SicdParams, load_stoplist

MODULE_NAMES = ("akd", "dacg", "cba", "sicd")
BASELINE_MODES = ("none", "fixed_threshold_0.4")


@dataclass(frozen=True)
class SynthConfig:
    """Scene parameters shared by every seed of a synthetic corpus."""

    grid: tuple[int, int] = (24, 24)
    image_size: tuple[int, int] = (96, 96)
    n_blobs: int = 4
    blob_intensity: tuple[float, float] = (0.5, 1.0)
    blob_sigma: tuple[float, float] = (1.4, 5.4)
    salt_pepper_rate: float = 0.05
    corner_spike_count: int = 2
    corner_spike_value: float = 1.1
    diffuse_background_level: float = 0.12
    distractor_blobs: int = 0


@dataclass(frozen=True)
class RenderConfig:
    opacity: float = 0.5
    draw_contours: bool = True

    def __post_init__(self):
        if not (0.0 <= self.opacity <= 1.0):
            raise ConfigError("render opacity must lie in [0, 1]")


@dataclass(frozen=True)
class PipelineConfig:
    modules: tuple[str, ...] = MODULE_NAMES
    baseline_mode: str = "none"
    workers: int = 1
    akd: AkdParams = field(default_factory=AkdParams)
    dacg: DacgParams = field(default_factory=DacgParams)
    cba: CbaParams = field(default_factory=CbaParams)
    sicd: SicdParams = field(default_factory=SicdParams)
    synth: SynthConfig = field(default_factory=SynthConfig)
    render: RenderConfig = field(default_factory=RenderConfig)

    def __post_init__(self):
        seen = set()
        for name in self.modules:
            if name not in MODULE_NAMES:
                raise ConfigError(f"unknown refinement module {name!r}")
            if name in seen:
                raise ConfigError(f"module {name!r} listed twice")
            seen.add(name)
        if self.baseline_mode not in BASELINE_MODES:
            raise ConfigError(f"baseline_mode must be one of {BASELINE_MODES}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


_TUPLE_KEYS = {
    "modules",
    "weights",
    "f_step_breaks",
    "f_step_values",
    "f_std_breaks",
    "f_std_values",
    "f_size_clamp",
    "grid",
    "image_size",
    "blob_intensity",
    "blob_sigma",
}


def _build_section(cls, table: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key == "stoplist" and section == "sicd":
            kwargs["stoplist"] = load_stoplist(value)
            continue
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        if key in _TUPLE_KEYS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad [{section}] block: {exc}") from exc


def config_from_dict(doc: dict) -> PipelineConfig:
    sections = {
        "akd": AkdParams,
        "dacg": DacgParams,
        "cba": CbaParams,
        "sicd": SicdParams,
        "synth": SynthConfig,
        "render": RenderConfig,
    }
    kwargs = {}
    for name, table in doc.items():
        if name == "pipeline":
            if not isinstance(table, dict):
                raise ConfigError("[pipeline] must be a table")
            for key, value in table.items():
                if key not in {"modules", "baseline_mode", "workers"}:
                    raise ConfigError(f"unknown key {key!r} in [pipeline]")
                kwargs[key] = tuple(value) if key == "modules" else value
        elif name in sections:
            if not isinstance(table, dict):
                raise ConfigError(f"[{name}] must be a table")
            kwargs[name] = _build_section(sections[name], table, name)
        else:
            raise ConfigError(f"unknown config section [{name}]")
    return PipelineConfig(**kwargs)


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path, "rb") as fp:
            doc = tomllib.load(fp)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(doc)


def set_param(config: PipelineConfig, path: str, value) -> PipelineConfig:
    """Return a copy of the config with one dotted parameter replaced,
    e.g. ``set_param(cfg, "dacg.delta_sigma", 0.18)``."""
    parts = path.split(".")
    if len(parts) != 2:
        raise ConfigError(f"parameter path must be section.key, got {path!r}")
    section, key = parts
    if section == "pipeline":
        if key not in {"modules", "baseline_mode", "workers"}:
            raise ConfigError(f"unknown pipeline key {key!r}")
        return dataclasses.replace(config, **{key: value})
    if section not in {"akd", "dacg", "cba", "sicd", "synth", "render"}:
        raise ConfigError(f"unknown config section {section!r}")
    block = getattr(config, section)
    if key not in {f.name for f in dataclasses.fields(block)}:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    try:
        new_block = dataclasses.replace(block, **{key: value})
    except TypeError as exc:
        raise ConfigError(f"cannot set {path}={value!r}: {exc}") from exc
    return dataclasses.replace(config, **{section: new_block})


def parse_value(text: str):
    """Parse a CLI sweep value: int, float, bool or bare string."""
    low = text.strip()
    if low.lower() in {"true", "false"}:
        return low.lower() == "true"
    for cast in (int, float):
        try:
            return cast(low)
        except ValueError:
            continue
    return low


def describe(config: PipelineConfig) -> dict:
    """Flatten the config into a plain dict for provenance output."""
    out: dict = {
        "pipeline": {
            "modules": list(config.modules),
            "baseline_mode": config.baseline_mode,
            "workers": config.workers,
        }
    }
    for name in ("akd", "dacg", "cba", "sicd", "synth", "render"):
        block = getattr(config, name)
        table = {}
        for f in dataclasses.fields(block):
            v = getattr(block, f.name)
            if isinstance(v, frozenset):
                v = sorted(v)
            elif isinstance(v, tuple):
                v = list(v)
            table[f.name] = v
        out[name] = table
    return out
