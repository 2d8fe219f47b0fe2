"""Run configuration: one structured file (YAML) with dotted-key overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .data import SyntheticConfig
from .encoder import EncoderMode
from .errors import ConfigError
from .vae import ModelConfig


@dataclass
class RunConfig:
    # window geometry
    obs_frames: int = 5              # T (maximum when obs_frames_min is set)
    obs_frames_min: int | None = None
    horizon: int = 15                # H
    dt: float = 0.2
    radius: float = 30.0
    k_list: tuple[int, ...] = (1, 5)
    # encoder mode
    use_s_attn: bool = True
    map_mode: str = "integrated"
    use_m_attn: bool = True
    # model dimensions
    hidden_dim: int = 256
    latent_dim: int = 32
    map_feature_dim: int = 256
    key_dim: int = 64
    value_dim: int = 128
    embed_hidden: int = 64
    zd_embed_dim: int = 64
    head_hidden: int = 64
    cnn_channels: tuple[int, ...] = (16, 32, 64, 128)
    cnn_first_kernel: int = 3
    cnn_first_stride: int = 2
    feature_scale: float = 0.1
    scaled_attention: bool = False
    # objective and optimizer
    beta: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 10
    batch_size: int = 64
    grad_clip: float = 5.0
    latent_samples: int = 1
    seed: int = 0
    # generation
    n_scenes: int = 100
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    def __post_init__(self):
        self.k_list = tuple(int(k) for k in self.k_list)
        self.cnn_channels = tuple(int(c) for c in self.cnn_channels)
        if isinstance(self.synthetic, dict):
            self.synthetic = SyntheticConfig(**self.synthetic)

    def validate(self) -> None:
        if self.obs_frames < 2:
            raise ConfigError(f"obs_frames must be >= 2, got {self.obs_frames}")
        if self.obs_frames_min is not None and not 2 <= self.obs_frames_min <= self.obs_frames:
            raise ConfigError("obs_frames_min must lie in [2, obs_frames]")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.radius <= 0:
            raise ConfigError(f"radius must be positive, got {self.radius}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if any(k < 1 for k in self.k_list):
            raise ConfigError(f"k values must be >= 1, got {self.k_list}")
        self.mode()  # raises ConfigError on inconsistent attention flags
        self.synthetic.validate()

    def mode(self) -> EncoderMode:
        return EncoderMode(use_s_attn=self.use_s_attn, map_mode=self.map_mode,
                           use_m_attn=self.use_m_attn)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden_dim=self.hidden_dim, latent_dim=self.latent_dim,
            map_feature_dim=self.map_feature_dim, key_dim=self.key_dim,
            value_dim=self.value_dim, embed_hidden=self.embed_hidden,
            zd_embed_dim=self.zd_embed_dim, head_hidden=self.head_hidden,
            cnn_channels=self.cnn_channels, cnn_first_kernel=self.cnn_first_kernel,
            cnn_first_stride=self.cnn_first_stride, feature_scale=self.feature_scale,
            scaled_attention=self.scaled_attention, mode=self.mode())

    def t_range(self) -> tuple[int, int]:
        low = self.obs_frames_min if self.obs_frames_min is not None else self.obs_frames
        return (low, self.obs_frames)

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["k_list"] = list(self.k_list)
        data["cnn_channels"] = list(self.cnn_channels)
        return data


def _coerce(value, target_type):
    if target_type is tuple or str(target_type).startswith("tuple"):
        return tuple(value)
    return value


def _apply_overrides(data: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must have the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from exc
        target = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"override {key!r} descends into a non-mapping")
        target[parts[-1]] = value
    return data


def load_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    """Load a RunConfig from YAML and apply key=value overrides (dotted keys)."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        with open(p) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file must hold a mapping, got {type(loaded).__name__}")
        data = loaded
    data = _apply_overrides(data, overrides or [])

    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "synthetic" in data and isinstance(data["synthetic"], dict):
        syn_known = {f.name for f in fields(SyntheticConfig)}
        syn_unknown = set(data["synthetic"]) - syn_known
        if syn_unknown:
            raise ConfigError(f"unknown synthetic config keys: {sorted(syn_unknown)}")
        for tup_key in ("speed_range", "turn_probabilities", "entry_distance_range"):
            if tup_key in data["synthetic"]:
                data["synthetic"][tup_key] = tuple(data["synthetic"][tup_key])
        data["synthetic"] = SyntheticConfig(**data["synthetic"])
    try:
        cfg = RunConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    cfg.validate()
    return cfg
