"""Layered run configuration: defaults <- YAML file <- command-line flags.

Parsing is strict: unknown sections or keys are errors, and every section is
validated by its dataclass.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from . import dsp
from .losses import LossConfig
from .models import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DSPConfig:
    """Analysis constants. The mel front end and vocoder are built around
    these values, so they are validated rather than freely adjustable."""

    sample_rate: int = dsp.SAMPLE_RATE
    frame_size: int = dsp.N_FFT
    hop: int = dsp.HOP
    n_mels: int = dsp.N_MELS
    floor: float = dsp.FLOOR
    resampler_zeros: int = dsp.RESAMPLE_ZEROS
    resampler_beta: float = dsp.RESAMPLE_BETA
    resampler_rolloff: float = dsp.RESAMPLE_ROLLOFF

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) != f.default:
                raise ValueError(f"dsp.{f.name} is fixed at {f.default} in this build, got {getattr(self, f.name)}")


@dataclass(frozen=True)
class EvalConfig:
    n_val: int = 25
    n_test: int = 25
    metrics: tuple[str, ...] = ("mcd", "msd")

    def __post_init__(self):
        if self.n_val < 0 or self.n_test < 0:
            raise ValueError("eval.n_val and eval.n_test must be >= 0")
        bad = set(self.metrics) - {"mcd", "msd"}
        if bad:
            raise ValueError(f"eval.metrics has unknown entries {sorted(bad)}")


SECTIONS = {"dsp": DSPConfig, "model": ModelConfig, "loss": LossConfig, "train": TrainConfig, "eval": EvalConfig}


@dataclass(frozen=True)
class RunConfig:
    dsp: DSPConfig = field(default_factory=DSPConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    run_name: str = "run"
    output_root: str = "runs"

    def to_dict(self) -> dict:
        d = asdict(self)
        for section in ("loss", "eval"):
            for k, v in d[section].items():
                if isinstance(v, tuple):
                    d[section][k] = list(v)
        return d

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _build_section(name: str, cls, values) -> object:
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    kwargs = {}
    for k, v in values.items():
        default = known[k].default
        if isinstance(default, tuple) and isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} config: {exc}") from exc


def from_dict(data: dict) -> RunConfig:
    data = dict(data or {})
    top = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {name: _build_section(name, cls, data.get(name)) for name, cls in SECTIONS.items()}
    for k in ("seed", "run_name", "output_root"):
        if k in data:
            kwargs[k] = data[k]
    if not isinstance(kwargs.get("seed", 0), int):
        raise ConfigError("seed must be an integer")
    return RunConfig(**kwargs)


def merge(base: dict, override: dict) -> dict:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def load(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the YAML file at ``path``, then ``overrides``."""
    data = RunConfig().to_dict()
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path} must contain a mapping")
        data = merge(data, loaded)
    if overrides:
        data = merge(data, overrides)
    return from_dict(data)


def replace_section(cfg: RunConfig, section: str, **changes) -> RunConfig:
    return dataclasses.replace(cfg, **{section: dataclasses.replace(getattr(cfg, section), **changes)})
