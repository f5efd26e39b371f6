"""Experiment configuration: nested frozen dataclasses loaded from YAML.

A config file is a mapping of section name to field values; omitted fields
keep their defaults. ``--set section.field=value`` overrides are parsed as
YAML scalars or flow sequences, e.g. ``--set run.seeds=[0,1]``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .corrective import DEFAULT_Q, DEFAULT_R
from .datagen import DatasetSpec
from .dynamics import PendulumParams, SimConfig
from .embedding import TsneConfig
from .ppo import PolicyConfig
from .safe_region import DEFAULT_BANDWIDTH_FRACTION, DEFAULT_THRESHOLD
from .safety import StateRanges
from .srl import TaskConfig

DELTAS = (1.1, 1.5, 4.0)
ALPHAS = (0.0, 0.5, 1.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    k: int = 1000
    alpha: float = 0.5
    seed: int = 0
    rollout_episodes: int = 200
    rollout_length: int = 300

    def __post_init__(self):
        self.spec(StateRanges())  # same validation as the dataset itself

    def spec(self, ranges: StateRanges) -> DatasetSpec:
        return DatasetSpec(self.k, self.alpha, self.seed, ranges, self.rollout_episodes, self.rollout_length)


@dataclass(frozen=True)
class ControllerConfig:
    q_diag: tuple = DEFAULT_Q
    r_scale: float = DEFAULT_R
    horizon: float = 10.0
    tolerance: float = 0.01


@dataclass(frozen=True)
class RegionConfig:
    p_t: float = DEFAULT_THRESHOLD
    bandwidth_fraction: float = DEFAULT_BANDWIDTH_FRACTION
    grid_resolution: int = 100


@dataclass(frozen=True)
class RunConfig:
    total_steps: int = 100_000
    seeds: tuple = (0, 1, 2)
    log_steps: bool = False
    supervised: bool = True


@dataclass(frozen=True)
class EvalConfig:
    n_eval: int = 10_000
    seed: int = 12345
    n_bound_samples: int = 1000
    n_toys: int = 100
    toy_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    pendulum: PendulumParams = field(default_factory=PendulumParams)
    sim: SimConfig = field(default_factory=SimConfig)
    ranges: StateRanges = field(default_factory=StateRanges)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    tsne: TsneConfig = field(default_factory=TsneConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    region: RegionConfig = field(default_factory=RegionConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    run: RunConfig = field(default_factory=RunConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        return _build(cls, d or {}, "")

    def with_overrides(self, overrides) -> "ExperimentConfig":
        d = self.to_dict()
        for item in overrides or ():
            key, sep, raw = item.partition("=")
            if not sep:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            node = d
            parts = key.strip().split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown config section {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[parts[-1]] = yaml.safe_load(raw)
        return ExperimentConfig.from_dict(d)


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _build(cls, d: dict, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"section {where or '<root>'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section {where or '<root>'}")
    defaults = cls()
    kwargs = {}
    for name, f in known.items():
        if name not in d:
            continue
        current = getattr(defaults, name)
        value = d[name]
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}".lstrip("."))
        elif isinstance(current, tuple):
            kwargs[name] = tuple(value)
        elif isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
            kwargs[name] = float(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {where or '<root>'}: {exc}") from exc


def load_config(path=None, overrides=None) -> ExperimentConfig:
    base = {}
    if path is not None:
        base = yaml.safe_load(Path(path).read_text()) or {}
    return ExperimentConfig.from_dict(base).with_overrides(overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
