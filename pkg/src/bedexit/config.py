"""Run configuration: one YAML document drives every subcommand.

Sections (all optional, all fields defaulted):

    seed: 42                 # the single randomness knob
    signal:   {sample_rate_hz, filter_low_hz, filter_high_hz, lookback_s, stride_s}
    encoding: EncodingConfig fields
    model:    ModelConfig fields
    training: TrainConfig fields
    synth:    SynthConfig fields
    paths:    {data_dir, images_dir, checkpoint, out_dir}

Unknown keys anywhere are rejected. The top-level seed propagates into
synth.seed and training.seed unless a section sets its own; a CLI seed
override wins everywhere. The original file text is kept verbatim so every
output directory can carry an exact provenance copy.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, get_type_hints

import yaml

from .errors import ConfigError, UnknownConfigKeyError
from .imaging import EncodingConfig
from .model import ModelConfig
from .signals import WindowSpec
from .synth import SynthConfig
from .training import TrainConfig

DEFAULT_SEED = 42


@dataclass(frozen=True)
class SignalConfig:
    sample_rate_hz: float = 25.0
    filter_low_hz: float = 0.5
    filter_high_hz: float = 10.0
    lookback_s: float = 10800.0
    stride_s: float = 1800.0

    def validate(self) -> "SignalConfig":
        if self.sample_rate_hz <= 0:
            raise ConfigError("signal.sample_rate_hz must be positive")
        if not (0 < self.filter_low_hz < self.filter_high_hz < self.sample_rate_hz / 2):
            raise ConfigError("filter band must satisfy 0 < low < high < Nyquist")
        self.window_spec().validate(self.sample_rate_hz)
        return self

    def window_spec(self) -> WindowSpec:
        return WindowSpec(lookback_s=self.lookback_s, stride_s=self.stride_s)


@dataclass(frozen=True)
class PathsConfig:
    data_dir: Optional[str] = None
    images_dir: Optional[str] = None
    checkpoint: Optional[str] = None
    out_dir: Optional[str] = None

    def validate(self) -> "PathsConfig":
        return self


@dataclass(frozen=True)
class RunConfig:
    seed: int = DEFAULT_SEED
    signal: SignalConfig = SignalConfig()
    encoding: EncodingConfig = EncodingConfig()
    model: ModelConfig = ModelConfig()
    training: TrainConfig = TrainConfig(seed=DEFAULT_SEED)
    synth: SynthConfig = SynthConfig(seed=DEFAULT_SEED)
    paths: PathsConfig = PathsConfig()
    source_text: str = ""

    def validate(self) -> "RunConfig":
        if self.seed < 0 or self.seed > 2**64 - 1:
            raise ConfigError("seed must fit in 64 bits")
        self.signal.validate()
        self.encoding.validate()
        self.model.validate()
        self.training.validate()
        self.synth.validate()
        if self.synth.sample_rate_hz != self.signal.sample_rate_hz:
            raise ConfigError(
                "synth.sample_rate_hz must match signal.sample_rate_hz "
                f"({self.synth.sample_rate_hz} vs {self.signal.sample_rate_hz})"
            )
        return self


_SECTIONS = {
    "signal": SignalConfig,
    "encoding": EncodingConfig,
    "model": ModelConfig,
    "training": TrainConfig,
    "synth": SynthConfig,
    "paths": PathsConfig,
}

_RANGE_FIELDS = {"body_weight_kg", "tare_kg", "transition_minutes", "stable_hours"}


def _coerce(name: str, hint, value, where: str):
    if name in _RANGE_FIELDS:
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigError(f"{where} must be a [low, high] pair")
        return (float(value[0]), float(value[1]))
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if hint == Optional[str]:
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{where} must be a string or null, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported config field type")


def _build_section(cls, data, section: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config section {section!r} must be a mapping")
    hints = get_type_hints(cls)
    valid = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in valid:
            raise UnknownConfigKeyError(f"unknown config key {section}.{key}")
        kwargs[key] = _coerce(key, hints[key], value, f"{section}.{key}")
    return cls(**kwargs), set(kwargs)


def parse_run_config(text: str, seed_override: Optional[int] = None) -> RunConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")

    known_top = set(_SECTIONS) | {"seed"}
    for key in doc:
        if key not in known_top:
            raise UnknownConfigKeyError(f"unknown config key {key}")

    seed = doc.get("seed", DEFAULT_SEED)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    if seed_override is not None:
        seed = seed_override

    parts = {}
    explicit: dict[str, set] = {}
    for section, cls in _SECTIONS.items():
        parts[section], explicit[section] = _build_section(
            cls, doc.get(section), section
        )

    # the single seed flows into the seeded sections unless set explicitly;
    # a CLI override beats even explicit section seeds
    for section in ("training", "synth"):
        if seed_override is not None or "seed" not in explicit[section]:
            parts[section] = dataclasses.replace(parts[section], seed=seed)

    return RunConfig(seed=seed, source_text=text, **parts).validate()


def load_run_config(path: Optional[str], seed_override: Optional[int] = None) -> RunConfig:
    """Parse the YAML file at `path`; no path means all defaults."""
    if path is None:
        return parse_run_config("", seed_override=seed_override)
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_run_config(p.read_text(encoding="utf-8"), seed_override=seed_override)
