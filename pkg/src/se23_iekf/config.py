"""Run configuration: nested dataclasses loaded from JSON with strict validation."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .evaluation import DEFAULT_FILTERS, SIM_GYRO_STD, SIM_ACCEL_STD, SIM_R, SimConfig
from .filters import FILTER_NAMES
from .models import (
    EXPERIMENT_ACCEL_PSD,
    EXPERIMENT_BASELINE,
    EXPERIMENT_GYRO_PSD,
    EXPERIMENT_R1,
    EXPERIMENT_R2,
    NoiseModel,
    ReceiverGeometry,
    TrajectoryConfig,
)

CONFIG_VERSION = 1


def _sim_noise_defaults():
    dt = 1.0 / 250.0
    return {
        "gyro_psd": [SIM_GYRO_STD**2 * dt] * 3,
        "accel_psd": [SIM_ACCEL_STD**2 * dt] * 3,
        "r1": list(SIM_R),
        "r2": list(SIM_R),
    }


@dataclass
class NoiseConfig:
    """Diagonals of the gyro/accel PSDs and of the receiver covariances."""

    gyro_psd: list = field(default_factory=lambda: _sim_noise_defaults()["gyro_psd"])
    accel_psd: list = field(default_factory=lambda: _sim_noise_defaults()["accel_psd"])
    r1: list = field(default_factory=lambda: _sim_noise_defaults()["r1"])
    r2: list = field(default_factory=lambda: _sim_noise_defaults()["r2"])

    def validate(self, path):
        for name in ("gyro_psd", "accel_psd", "r1", "r2"):
            _vector(self, name, 3, path, positive=True)

    def model(self) -> NoiseModel:
        return NoiseModel.from_diagonals(self.gyro_psd, self.accel_psd, self.r1, self.r2)

    @classmethod
    def experiment(cls) -> "NoiseConfig":
        return cls(
            list(EXPERIMENT_GYRO_PSD), list(EXPERIMENT_ACCEL_PSD),
            list(EXPERIMENT_R1), list(EXPERIMENT_R2),
        )


@dataclass
class GeometryConfig:
    lever1: list = field(default_factory=lambda: [0.9, 0.0, 0.0])
    lever2: list = field(default_factory=lambda: [-0.9, 0.0, 0.0])

    def validate(self, path):
        _vector(self, "lever1", 3, path)
        _vector(self, "lever2", 3, path)

    def model(self) -> ReceiverGeometry:
        return ReceiverGeometry(self.lever1, self.lever2)


@dataclass
class InitConfig:
    """Initial covariance diagonal (theta, v, r) and the constant attitude error."""

    p0_diag: list = field(default_factory=lambda: [(math.pi / 3) ** 2] * 3 + [0.01] * 6)
    attitude_offset: list = field(default_factory=lambda: [math.pi / 3] * 3)
    sample_initial: bool = True

    def validate(self, path):
        _vector(self, "p0_diag", 9, path, positive=True)
        _vector(self, "attitude_offset", 3, path)
        if np.linalg.norm(self.attitude_offset) >= math.pi:
            raise ConfigError(f"{path}.attitude_offset: rotation angle must be below pi")
        _bool(self, "sample_initial", path)


@dataclass
class DatasetConfig:
    """Synthetic replay dataset; noise defaults to the values identified on the UWB rig."""

    duration: float = 120.0
    imu_rate: float = 250.0
    fix_rate: float = 17.0
    noise: NoiseConfig = field(default_factory=NoiseConfig.experiment)

    def validate(self, path):
        for name in ("duration", "imu_rate", "fix_rate"):
            _positive(self, name, path)
        self.noise.validate(f"{path}.noise")


@dataclass
class RunConfig:
    version: int = CONFIG_VERSION
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    init: InitConfig = field(default_factory=InitConfig)
    filters: list = field(default_factory=lambda: list(DEFAULT_FILTERS))
    trials: int = 100
    seed: int = 0
    spacings: list = field(default_factory=lambda: [0.1, 0.5, 1.0, EXPERIMENT_BASELINE])
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    out: str = "results"

    def validate(self, path="config"):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"{path}.version: unsupported config version {self.version!r}")
        self.noise.validate(f"{path}.noise")
        self.geometry.validate(f"{path}.geometry")
        self.init.validate(f"{path}.init")
        self.dataset.validate(f"{path}.dataset")
        if not isinstance(self.filters, list) or not self.filters:
            raise ConfigError(f"{path}.filters: expected a non-empty list")
        for name in self.filters:
            if name not in FILTER_NAMES:
                raise ConfigError(f"{path}.filters: unknown filter {name!r}")
        if any(n.endswith("2") for n in self.filters) and np.allclose(self.geometry.lever1, self.geometry.lever2):
            raise ConfigError(f"{path}.geometry: two-receiver filters need distinct lever arms")
        _int(self, "trials", path, minimum=1)
        _int(self, "seed", path, minimum=0)
        if not isinstance(self.spacings, list) or not self.spacings:
            raise ConfigError(f"{path}.spacings: expected a non-empty list")
        for s in self.spacings:
            if not _is_number(s) or s <= 0:
                raise ConfigError(f"{path}.spacings: entries must be positive numbers, got {s!r}")
        if not isinstance(self.out, str):
            raise ConfigError(f"{path}.out: expected a string")
        return self

    def sim_config(self) -> SimConfig:
        return SimConfig(
            trajectory=self.trajectory,
            noise=self.noise.model(),
            geometry=self.geometry.model(),
            p0_diag=tuple(self.init.p0_diag),
            attitude_offset=tuple(self.init.attitude_offset),
            sample_initial=self.init.sample_initial,
        )

    def dataset_trajectory(self) -> TrajectoryConfig:
        d = self.dataset
        return dataclasses.replace(
            self.trajectory, duration=d.duration, imu_rate=d.imu_rate, fix_rate=d.fix_rate
        )


# --------------------------------------------------------------------------- validation helpers


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _vector(obj, name, n, path, positive=False):
    value = getattr(obj, name)
    if not isinstance(value, (list, tuple)) or len(value) != n or not all(_is_number(x) for x in value):
        raise ConfigError(f"{path}.{name}: expected a list of {n} finite numbers, got {value!r}")
    if positive and any(x <= 0 for x in value):
        raise ConfigError(f"{path}.{name}: entries must be positive")
    setattr(obj, name, [float(x) for x in value])


def _positive(obj, name, path):
    value = getattr(obj, name)
    if not _is_number(value) or value <= 0:
        raise ConfigError(f"{path}.{name}: must be a positive number, got {value!r}")


def _int(obj, name, path, minimum):
    value = getattr(obj, name)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{path}.{name}: must be an integer >= {minimum}, got {value!r}")


def _bool(obj, name, path):
    if not isinstance(getattr(obj, name), bool):
        raise ConfigError(f"{path}.{name}: must be true or false")


def _build(cls, data, path, base=None):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    kwargs = dict(base or {})
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        if sub:
            value = _build(sub, value, f"{path}.{name}", _NESTED_BASE.get((cls, name), dict)())
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        # TrajectoryConfig validates itself and reports the bare field name
        raise ConfigError(f"{path}.{exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


_NESTED = {
    (RunConfig, "trajectory"): TrajectoryConfig,
    (RunConfig, "noise"): NoiseConfig,
    (RunConfig, "geometry"): GeometryConfig,
    (RunConfig, "init"): InitConfig,
    (RunConfig, "dataset"): DatasetConfig,
    (DatasetConfig, "noise"): NoiseConfig,
}

# partially given dataset noise falls back to the rig values, not the simulation ones
_NESTED_BASE = {(DatasetConfig, "noise"): lambda: dataclasses.asdict(NoiseConfig.experiment())}


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "config").validate()


def load_config(path) -> RunConfig:
    """Read and validate a JSON run configuration; missing keys take defaults."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> dict:
    """Plain-JSON form of the full effective configuration (defaults included)."""

    def convert(x):
        if isinstance(x, tuple):
            return [convert(v) for v in x]
        if isinstance(x, list):
            return [convert(v) for v in x]
        if isinstance(x, dict):
            return {k: convert(v) for k, v in x.items()}
        return x

    return convert(dataclasses.asdict(cfg))


def save_config(cfg: RunConfig, path):
    Path(path).write_text(json.dumps(dump_config(cfg), indent=2) + "\n", encoding="utf-8")
