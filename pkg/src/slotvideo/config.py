"""Model and training configuration records plus the flat YAML config format.

A config file is a single flat mapping of key/value pairs. Keys are the
union of ModelConfig and TrainConfig field names; loading splits them by
ownership and rejects unknown keys. Values round-trip bit-exactly (floats
are serialized via repr).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

import yaml


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters of the grouping model."""

    num_slots: int = 6
    slot_dim: int = 64
    feature_dim: int = 64
    image_size: int = 48
    patch_size: int = 8
    backbone: str = "conv"  # conv | import
    backbone_widths: tuple[int, ...] = (32, 64)
    backbone_frozen: bool = True
    feature_dir: str = ""  # source directory for backbone == import
    adapter_hidden: tuple[int, ...] = ()  # () means one hidden layer of 2*feature_dim
    adapter_activation: str = "relu"
    sa_iters_first: int = 3
    sa_iters_other: int = 2
    sa_mlp_hidden: int = 0  # 0 means slot_dim
    init_strategy: str = "learned"  # learned | random | kmeans
    kmeans_iters: int = 10
    kmeans_restarts: int = 1
    predictor_type: str = "transformer"
    predictor_layers: int = 1
    predictor_heads: int = 4
    decoder_type: str = "mlp"
    decoder_hidden: int = 256
    decoder_layers: int = 3
    precision: str = "float32"  # float32 | float64

    def __post_init__(self):
        if self.num_slots < 1:
            raise ValueError("num_slots must be >= 1")
        if self.image_size % self.patch_size != 0:
            raise ValueError("image_size must be divisible by patch_size")
        if self.backbone not in ("conv", "import"):
            raise ValueError(f"unknown backbone kind: {self.backbone}")
        if self.init_strategy not in ("learned", "random", "kmeans"):
            raise ValueError(f"unknown init_strategy: {self.init_strategy}")
        if self.predictor_type != "transformer":
            raise ValueError(f"unknown predictor_type: {self.predictor_type}")
        if self.decoder_type != "mlp":
            raise ValueError(f"unknown decoder_type: {self.decoder_type}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"unknown precision: {self.precision}")

    @property
    def tokens_per_frame(self) -> int:
        side = self.image_size // self.patch_size
        return side * side

    @property
    def grid(self) -> tuple[int, int]:
        side = self.image_size // self.patch_size
        return side, side


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule and loss hyperparameters."""

    steps: int = 20000
    batch_size: int = 16
    segment_length: int = 4
    optimizer: str = "adam"
    peak_lr: float = 4e-4
    warmup_steps: int = 2500
    decay_steps: int = 20000  # horizon over which LR decays to peak/100
    grad_clip: float = 0.05
    temperature: float = 0.1
    contrast_weight: float = 0.5
    contrast_mode: str = "batch"  # batch | intra
    exclude_positive: bool = False
    crop_strategy: str = "full"
    augmentations: str = "none"
    eval_every: int = 1000
    eval_clips: int = 0  # 0 means all validation clips
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.contrast_weight < 0:
            raise ValueError("contrast_weight must be >= 0")
        if self.segment_length < 2:
            raise ValueError("segment_length must be >= 2 (losses need consecutive frames)")
        if self.optimizer != "adam":
            raise ValueError(f"unknown optimizer: {self.optimizer}")
        if self.contrast_mode not in ("batch", "intra"):
            raise ValueError(f"unknown contrast_mode: {self.contrast_mode}")
        if self.crop_strategy != "full":
            raise ValueError("only crop_strategy=full is supported")
        if self.augmentations != "none":
            raise ValueError("augmentations are not supported")


def _to_plain(value):
    if isinstance(value, tuple):
        return [_to_plain(v) for v in value]
    return value


def config_to_dict(cfg) -> dict:
    return {f.name: _to_plain(getattr(cfg, f.name)) for f in fields(cfg)}


def config_from_dict(cls, data: dict):
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    return cls(**kwargs)


def config_hash(*cfgs) -> str:
    """Stable content hash of one or more config records."""
    blob = json.dumps([config_to_dict(c) for c in cfgs], sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def save_config(path, model: ModelConfig, train: TrainConfig) -> None:
    flat = {**config_to_dict(model), **config_to_dict(train)}
    with open(path, "w") as fh:
        yaml.safe_dump(flat, fh, sort_keys=True)


def load_config(path) -> tuple[ModelConfig, TrainConfig]:
    """Load a flat config file, splitting keys between model and train records."""
    with open(path) as fh:
        flat = yaml.safe_load(fh) or {}
    model_keys = {f.name for f in fields(ModelConfig)}
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = set(flat) - model_keys - train_keys
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    model = config_from_dict(ModelConfig, {k: v for k, v in flat.items() if k in model_keys})
    train = config_from_dict(TrainConfig, {k: v for k, v in flat.items() if k in train_keys})
    return model, train
