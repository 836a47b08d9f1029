"""Run configuration: nested dataclasses with documented defaults.

Config files are YAML (JSON is accepted as a YAML subset).  Every section
and key is optional; unknown keys raise ``ConfigError`` so typos surface
instead of silently falling back to defaults.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import yaml

from .adaptive import AdaptiveConfig
from .errors import ConfigError


@dataclass(frozen=True)
class IntensityConfig:
    K: int = 5                    # one of 5, 7, 9
    sampling_rate: int = 4        # one of 0, 2, 4, 8; 0 disables weighting
    restarts: int = 1
    max_iter: int = 200
    tol: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class DPGMMConfig:
    alpha: float = 1.0
    cap: int = 10                 # tables per cell; lightest evicted beyond this
    kappa0: float = 0.1
    nu0: float = 5.0
    psi0_scale: float = 0.05      # prior scale matrix = psi0_scale * I  (m^2)
    prior_mean_returns: int = 20  # returns averaged for each cell's prior mean
    p_b: float = 0.5              # P(B)
    level: Optional[float] = None  # decision level on P(B|x); None -> P(B)/2 (0.5 normalized)
    bayes_normalized: bool = False


@dataclass(frozen=True)
class LOFConfig:
    k: int = 10
    threshold: float = 1.5


@dataclass(frozen=True)
class ClusterConfig:
    eps: float = 0.8
    min_pts: int = 5
    range_scaling: bool = False
    reference_range: float = 30.0


@dataclass(frozen=True)
class ClassRules:
    pedestrian_max_length: float = 1.2
    pedestrian_height: Tuple[float, float] = (1.0, 2.2)
    pedestrian_max_speed: float = 3.0
    car_length: Tuple[float, float] = (3.0, 6.0)
    car_max_height: float = 2.2
    truck_length: Tuple[float, float] = (6.0, 10.0)
    truck_height: Tuple[float, float] = (2.2, 3.5)
    freight_min_length: float = 10.0
    freight_min_height: float = 3.5


@dataclass(frozen=True)
class TrackConfig:
    gate: float = 3.0
    confirm_hits: int = 6
    delete_misses: int = 7
    history: int = 8
    count_spawn_hit: bool = True
    position_gain: float = 0.7
    velocity_gain: float = 0.3


@dataclass(frozen=True)
class GeofenceConfig:
    include: List[List[Tuple[float, float]]] = field(default_factory=list)
    exclude: List[List[Tuple[float, float]]] = field(default_factory=list)


@dataclass(frozen=True)
class EvalConfig:
    match_radius: float = 2.0
    point_interval: int = 200
    object_interval: int = 300
    min_f1: Optional[float] = None
    min_precision: Optional[float] = None
    min_recall: Optional[float] = None
    min_accuracy: Optional[float] = None
    screenline: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None
    debounce_s: float = 2.0


@dataclass(frozen=True)
class RunConfig:
    model_type: str = "dpgmm"
    collision_policy: str = "nearest"
    max_intensity: float = 255.0
    intensity: IntensityConfig = IntensityConfig()
    dpgmm: DPGMMConfig = DPGMMConfig()
    adaptive: AdaptiveConfig = AdaptiveConfig()
    geofence: GeofenceConfig = GeofenceConfig()
    lof: LOFConfig = LOFConfig()
    cluster: ClusterConfig = ClusterConfig()
    classes: ClassRules = ClassRules()
    track: TrackConfig = TrackConfig()
    eval: EvalConfig = EvalConfig()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _build(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}.{name}" if path else name)
        elif isinstance(default, tuple) and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.model_type not in ("dpgmm", "adaptive"):
        raise ConfigError("model_type must be 'dpgmm' or 'adaptive'")
    if cfg.collision_policy not in ("nearest", "strongest", "first"):
        raise ConfigError("collision_policy must be nearest, strongest or first")
    if cfg.intensity.K not in (5, 7, 9):
        raise ConfigError("intensity.K must be 5, 7 or 9")
    if cfg.intensity.sampling_rate not in (0, 2, 4, 8):
        raise ConfigError("intensity.sampling_rate must be 0, 2, 4 or 8")
    if not 0 < cfg.dpgmm.p_b < 1:
        raise ConfigError("dpgmm.p_b must lie in (0, 1)")
    if not 0 <= cfg.adaptive.learning_rate < 1:
        raise ConfigError("adaptive.learning_rate must lie in [0, 1)")
    if cfg.cluster.eps <= 0 or cfg.cluster.min_pts < 1:
        raise ConfigError("cluster.eps must be positive and min_pts at least 1")
    return cfg


def from_dict(data: dict) -> RunConfig:
    return validate(_build(RunConfig, data, ""))


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from e
    return from_dict(data or {})
