"""Temporally consistent unsupervised object discovery in videos.

A recurrent slot-attention model groups per-frame patch features into object
slots, regularized by feature reconstruction and made temporally consistent
by a batch-level slot contrastive loss. Includes a synthetic sprite dataset
generator, video segmentation metrics (FG-ARI, mBO), and a downstream
autoregressive slot dynamics forecaster.
"""
from .config import ModelConfig, TrainConfig, load_config, save_config
from .core import FeatureSequence, MaskSequence, SlotSequence, VideoClip, validate_clip
from .data import DatasetManifest, SpriteSceneConfig, generate_dataset, load_dataset
from .dynamics import DynamicsConfig, SlotBank
from .estimators import SlotDynamicsForecaster, SlotVideoSegmenter
from .losses import LossBreakdown, total_loss
from .metrics import MetricReport, fg_ari, mbo
from .model import GroupingModel

__all__ = [
    "DatasetManifest",
    "DynamicsConfig",
    "FeatureSequence",
    "GroupingModel",
    "LossBreakdown",
    "MaskSequence",
    "MetricReport",
    "ModelConfig",
    "SlotBank",
    "SlotDynamicsForecaster",
    "SlotSequence",
    "SlotVideoSegmenter",
    "SpriteSceneConfig",
    "TrainConfig",
    "VideoClip",
    "fg_ari",
    "generate_dataset",
    "load_config",
    "load_dataset",
    "mbo",
    "save_config",
    "total_loss",
    "validate_clip",
]

__version__ = "0.1.0"
