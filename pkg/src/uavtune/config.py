"""Experiment configuration: a YAML key-value tree mapped onto dataclasses.

Unknown keys are rejected, missing keys take their defaults, and
``parse_config(serialize_config(c)) == c`` holds for every valid config.
Environment variables prefixed ``UAVTUNE_`` override individual keys, with
``__`` separating nesting levels (``UAVTUNE_WIND__MEAN_SPEED=3``).
"""
from __future__ import annotations

import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field

import yaml

from . import schedules
from .dynamics import TetherConfig, VehicleParams, WindField
from .fitness import FitnessLimits
from .supervisor import Environment, SensorNoise, TerminationRules

ENV_PREFIX = "UAVTUNE_"
LOG_LEVELS = ("debug", "info", "warning", "error")


class ConfigError(ValueError):
    pass


@dataclass
class TetherStages:
    ose: TetherConfig = field(default_factory=TetherConfig.ose)
    tse: TetherConfig = field(default_factory=TetherConfig.tse)


@dataclass
class ScheduleSelection:
    ose: str = "ose"
    tse: str = "tse"
    unseen: str = "unseen"
    # truncate every schedule to this many seconds (None keeps the full length)
    duration: float | None = None


@dataclass
class TrialSettings:
    random_wind_phase: bool = True
    start_yaw_range_deg: float = 60.0
    repeats: int = 3


@dataclass
class ExperimentConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    wind: WindField = field(default_factory=WindField)
    noise: SensorNoise = field(default_factory=SensorNoise)
    rules: TerminationRules = field(default_factory=TerminationRules)
    limits: FitnessLimits = field(default_factory=FitnessLimits)
    tether: TetherStages = field(default_factory=TetherStages)
    schedules: ScheduleSelection = field(default_factory=ScheduleSelection)
    trial: TrialSettings = field(default_factory=TrialSettings)
    population_size: int = 20
    generation_cap: int = 200
    bootstrap_budget: int = 5000
    repeats: int = 10
    generalisation_repeats: int = 20
    sweep_repeats: int = 20
    seed: int = 0
    # 0 uses every available CPU
    workers: int = 0
    out_dir: str = "results"
    log_level: str = "info"

    def __post_init__(self):
        validate(self)

    def environment(self) -> Environment:
        return Environment(self.vehicle, self.wind, self.noise, self.rules, self.limits,
                           self.trial.random_wind_phase, self.trial.start_yaw_range_deg)

    def schedule(self, role: str) -> schedules.WaypointSchedule:
        sched = schedules.get(getattr(self.schedules, role))
        if self.schedules.duration is not None:
            sched = sched.truncated(self.schedules.duration)
        return sched

    @classmethod
    def reduced(cls, **overrides) -> "ExperimentConfig":
        """Desk-scale preset: noiseless sensors, 20 s schedules, 3 repeats."""
        base = dict(noise=SensorNoise.none(), schedules=ScheduleSelection(duration=20.0), repeats=3)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def trivial(cls, **overrides) -> "ExperimentConfig":
        """No wind and no sensor noise."""
        base = dict(noise=SensorNoise.none(), wind=WindField(mean_speed=0.0, turbulence=0.0))
        base.update(overrides)
        return cls(**base)


def validate(cfg: ExperimentConfig) -> None:
    for role in ("ose", "tse", "unseen"):
        name = getattr(cfg.schedules, role)
        if name not in schedules.BUILTIN:
            raise ConfigError(f"schedules.{role}: unknown schedule {name!r}")
    if cfg.schedules.duration is not None and cfg.schedules.duration <= 0:
        raise ConfigError("schedules.duration: must be positive")
    for key in ("population_size", "generation_cap", "bootstrap_budget", "repeats",
                "generalisation_repeats", "sweep_repeats"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key}: must be at least 1")
    if cfg.workers < 0:
        raise ConfigError("workers: must be non-negative (0 means all CPUs)")
    if cfg.population_size < 4:
        raise ConfigError("population_size: need at least 4 individuals for donor selection")
    if cfg.trial.repeats < 1:
        raise ConfigError("trial.repeats: must be at least 1")
    if cfg.log_level not in LOG_LEVELS:
        raise ConfigError(f"log_level: expected one of {LOG_LEVELS}")


def _type_name(tp) -> str:
    return getattr(tp, "__name__", str(tp))


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        if value is None:
            value = {}
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _build(tp, value, path)
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)) or len(value) != len(args):
            raise ConfigError(f"{path}: expected a list of {len(args)} numbers")
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected bool")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected int")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected float")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected str")
        return value
    raise ConfigError(f"{path}: unsupported type {_type_name(tp)}")


def _build(cls, data: dict, path: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key {where}{unknown[0]} (expected one of {sorted(names)})")
    kwargs = {k: _convert(hints[k], v, f"{path}.{k}" if path else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


def to_dict(cfg: ExperimentConfig) -> dict:
    return _to_plain(cfg)


def from_dict(data: dict | None) -> ExperimentConfig:
    return _build(ExperimentConfig, data or {})


def env_overrides(environ=None, prefix: str = ENV_PREFIX) -> dict:
    """Nested override mapping from ``PREFIX_SECTION__KEY=value`` variables."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name, raw in environ.items():
        if not name.startswith(prefix):
            continue
        keys = name[len(prefix):].lower().split("__")
        node = out
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = yaml.safe_load(raw)
    return out


def merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_config(text: str, environ=None) -> ExperimentConfig:
    """Parse YAML text; ``environ`` (a mapping) supplies prefixed overrides."""
    try:
        data = yaml.safe_load(text) if text and text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    if environ:
        data = merge(data, env_overrides(environ))
    return from_dict(data)


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def load_config(path=None, environ=None) -> ExperimentConfig:
    text = ""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_config(text, environ)
