"""Run configuration: a TOML document with every setting spelled out.

Loading is strict: each section must list all of its keys, so defaults that
are our own choices (not published values) stay visible in the file.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .network.model import NetworkConfig
from .rollout import RolloutSettings
from .sfm import SfmParams


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    dataset: str = "dataset.json"
    dt: float = 0.4
    train_fraction: float = 2 / 3
    split_seed: int = 0
    augment_copies: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("data.dt must be positive")
        if not 0 < self.train_fraction <= 1:
            raise ConfigError("data.train_fraction must lie in (0, 1]")
        if self.augment_copies < 0:
            raise ConfigError("data.augment_copies must be non-negative")


@dataclass
class LidarConfig:
    beams: int = 360
    max_range: float = 30.0
    agent_radius: float = 0.2

    def __post_init__(self):
        if self.beams < 1:
            raise ConfigError("lidar.beams must be positive")
        if not self.max_range > 0:
            raise ConfigError("lidar.max_range must be positive")
        if not self.agent_radius > 0:
            raise ConfigError("lidar.agent_radius must be positive")


@dataclass
class NetworkSection:
    variant: str = "lstm"
    conv_layers: int = 9
    filters: int = 8
    kernel: int = 3
    lstm_units: int = 64
    dense_units: int = 64
    dropout_rate: float = 0.2
    bptt_window: int = 20
    bn_momentum: float = 0.9


@dataclass
class TrainingConfig:
    epochs: int = 20
    seed: int = 0
    l2_weight: float = 0.001
    sigma: float = 5.0
    batch_size: int = 8

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("training.epochs must be non-negative")
        if self.l2_weight < 0:
            raise ConfigError("training.l2_weight must be non-negative")
        if self.sigma < 0:
            raise ConfigError("training.sigma must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("training.batch_size must be positive")


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    network: NetworkSection = field(default_factory=NetworkSection)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sfm: SfmParams = field(default_factory=SfmParams)
    rollout: RolloutSettings = field(default_factory=RolloutSettings)
    base_dir: Path = field(default_factory=Path.cwd, compare=False)

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(**asdict(self.network), sigma=self.training.sigma, bins=self.lidar.beams)

    def rollout_settings(self) -> RolloutSettings:
        return RolloutSettings(**{**asdict(self.rollout), "agent_radius": self.lidar.agent_radius})

    def dataset_path(self) -> Path:
        p = Path(self.data.dataset)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        return {s: {k: v for k, v in asdict(getattr(self, s)).items() if (s, k) not in _SKIP}
                for s in SECTIONS}


SECTIONS = {"data": DataConfig, "lidar": LidarConfig, "network": NetworkSection,
            "training": TrainingConfig, "sfm": SfmParams, "rollout": RolloutSettings}
# agent radius lives under [lidar]; the rollout section omits it
_SKIP = {("rollout", "agent_radius")}


def _coerce(section: str, f, value):
    want = f.type if isinstance(f.type, type) else {"int": int, "float": float, "str": str}.get(str(f.type))
    if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if want is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if want is str and isinstance(value, str):
        return value
    raise ConfigError(f"{section}.{f.name} must be of type {getattr(want, '__name__', want)}")


def config_from_dict(doc: dict, base_dir: Path | None = None) -> RunConfig:
    kwargs = {}
    for section, cls in SECTIONS.items():
        if section not in doc:
            raise ConfigError(f"missing section [{section}]")
        body = dict(doc[section])
        values = {}
        for f in fields(cls):
            if (section, f.name) in _SKIP:
                continue
            if f.name not in body:
                raise ConfigError(f"missing field {section}.{f.name}")
            values[f.name] = _coerce(section, f, body.pop(f.name))
        if body:
            raise ConfigError(f"unknown field {section}.{sorted(body)[0]}")
        try:
            kwargs[section] = cls(**values)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    cfg = RunConfig(**kwargs, base_dir=base_dir or Path.cwd())
    try:
        cfg.network_config()
    except ValueError as exc:
        raise ConfigError(f"network: {exc}") from None
    return cfg


def load_config(path, check_files: bool = True) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config not found: {path}")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = config_from_dict(doc, path.parent.resolve())
    if check_files and not cfg.dataset_path().exists():
        raise FileNotFoundError(f"dataset not found: {cfg.dataset_path()}")
    return cfg


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return repr(v)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for key, value in asdict(getattr(cfg, section)).items():
            if (section, key) in _SKIP:
                continue
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)
