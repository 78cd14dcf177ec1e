"""Experiment configuration files.

A config is a YAML key tree with the blocks ``system``, ``reservoir``,
``training``, ``prediction``, ``schedule``, ``evaluation``, ``seeds`` and the
optional ``sweep`` and ``stability``.  Unknown keys and mistyped values are
rejected with the line they appear on.  The canonical form is sorted,
compact JSON of the fully resolved config; its SHA-256 names a run.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "canonical_json",
    "config_hash",
]


class ConfigError(ValueError):
    pass


@dataclass
class SystemConfig:
    name: str
    dt: float | None = None
    L: float | None = None
    M: int | None = None
    alpha: float | None = None
    beta: float | None = None
    substeps: int = 5


@dataclass
class ReservoirConfig:
    n_reservoir: int
    sigma: float
    rho: float
    eta: float
    degree: float | None = None
    density: float | None = None
    input_coupling: str = "dense"


@dataclass
class TrainingConfig:
    n_steps: int = 50000
    washout: int = 1000
    discard: int | None = None


@dataclass
class PredictionConfig:
    warmup: int = 100
    lyapunov_times: float = 100.0
    n_steps: int | None = None
    n_segments: int = 1
    gap: int = 1000


@dataclass
class ScheduleConfig:
    mode: str = "none"
    c: float = 1.0
    period: int = 1
    active: int = 1
    n_coupled: int | None = None
    sites: list[int] | None = None
    p_t: float = 1.0
    p_s: float = 1.0


@dataclass
class EvaluationConfig:
    tolerance: float = 0.05
    confirm: int = 10
    lambda_max: float | None = None
    lyapunov_steps: int = 20000


@dataclass
class SeedsConfig:
    data: int = 0
    reservoir: int = 1
    schedule: int = 0


@dataclass
class SweepConfig:
    kind: str = "regular"
    active: list[int] = field(default_factory=lambda: [1, 2, 4, 6, 8, 10])
    period: list[int] = field(default_factory=lambda: [10, 20, 50, 100, 200, 300, 500])
    p_t: list[float] = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    p_s: list[float] = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    schedule_seeds: int = 4
    ceiling: float = 10.0


@dataclass
class StabilityConfig:
    c: float = 0.8
    channels: list[int] = field(default_factory=lambda: [1])
    active: list[int] = field(default_factory=lambda: [1, 2, 4, 6, 8, 10])
    period: list[int] = field(default_factory=lambda: [10, 20, 50, 100, 200, 300, 500])
    n_steps: int = 40000
    renorm_interval: int = 10


@dataclass
class ExperimentConfig:
    system: SystemConfig
    reservoir: ReservoirConfig
    training: TrainingConfig = field(default_factory=TrainingConfig)
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    seeds: SeedsConfig = field(default_factory=SeedsConfig)
    sweep: SweepConfig | None = None
    stability: StabilityConfig | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every seed set to ``seed``."""
        return dataclasses.replace(self, seeds=SeedsConfig(seed, seed, seed))


def _where(node: yaml.Node, source: str) -> str:
    return f"{source}:{node.start_mark.line + 1}"


def _is_optional(hint) -> tuple[bool, object]:
    args = typing.get_args(hint)
    if typing.get_origin(hint) in (typing.Union, types.UnionType) and type(None) in args:
        rest = [a for a in args if a is not type(None)]
        return True, rest[0]
    return False, hint


def _scalar(node: yaml.Node, hint, source: str, key: str):
    value = yaml.safe_load(yaml.serialize(node))
    optional, hint = _is_optional(hint)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{_where(node, source)}: '{key}' must not be null")
    if typing.get_origin(hint) is list:
        (item,) = typing.get_args(hint)
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{_where(node, source)}: '{key}' must be a list")
        return [_scalar(n, item, source, key) for n in node.value]
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if hint is str and isinstance(value, str):
        return value
    raise ConfigError(
        f"{_where(node, source)}: '{key}' expects {getattr(hint, '__name__', hint)}, got {value!r}"
    )


def _build(node: yaml.Node, cls, source: str, block: str):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{_where(node, source)}: block '{block}' must be a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for knode, vnode in node.value:
        key = knode.value
        if key not in names:
            allowed = ", ".join(sorted(names))
            raise ConfigError(
                f"{_where(knode, source)}: unknown key '{key}' in {block} (allowed: {allowed})"
            )
        if key in kwargs:
            raise ConfigError(f"{_where(knode, source)}: duplicate key '{key}' in {block}")
        optional, inner = _is_optional(hints[key])
        if dataclasses.is_dataclass(inner):
            kwargs[key] = _build(vnode, inner, source, key)
        else:
            kwargs[key] = _scalar(vnode, hints[key], source, key)
    missing = [
        f.name
        for f in dataclasses.fields(cls)
        if f.name not in kwargs
        and f.default is dataclasses.MISSING
        and f.default_factory is dataclasses.MISSING
    ]
    if missing:
        raise ConfigError(f"{_where(node, source)}: {block} is missing {', '.join(missing)}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(node, source)}: {block}: {exc}") from exc


def _check(cfg: ExperimentConfig) -> None:
    if cfg.schedule.mode not in ("none", "regular", "random"):
        raise ConfigError(f"schedule.mode must be none, regular or random, not {cfg.schedule.mode!r}")
    if cfg.sweep is not None and cfg.sweep.kind not in ("regular", "random"):
        raise ConfigError(f"sweep.kind must be regular or random, not {cfg.sweep.kind!r}")
    r = cfg.reservoir
    if (r.degree is None) == (r.density is None):
        raise ConfigError("reservoir needs exactly one of degree or density")
    if cfg.prediction.n_segments < 1 or cfg.prediction.warmup < 1:
        raise ConfigError("prediction needs n_segments >= 1 and warmup >= 1")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if root is None:
        raise ConfigError(f"{source}: empty config")
    cfg = _build(root, ExperimentConfig, source, "config")
    _check(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def canonical_json(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()
