"""scikit-learn style estimators wrapping the training pipeline.

These facades let the model compose with the wider ecosystem: parameters are
introspectable via get_params/set_params, fitting consumes a sequence of
VideoClip (or a manifest path), and predictions are plain numpy arrays.
"""
from __future__ import annotations

import tempfile

import numpy as np
import torch
from sklearn.base import BaseEstimator

from .config import ModelConfig, TrainConfig
from .core import as_clip_list, validate_clip
from .dynamics import DynamicsConfig, SlotBank
from .harness import (
    dataset_from_source,
    evaluate,
    pixel_masks_for_slots,
    slots_for_clip,
    train,
)


class SlotVideoSegmenter(BaseEstimator):
    """Unsupervised video object segmenter with a fit/predict interface.

    fit(X) trains on a sequence of VideoClip (labels are never used);
    predict(X) returns per-clip integer pixel masks [T, H, W]; transform(X)
    returns per-clip slot sequences [T, K, D_slot]. score(X) is the mean
    video FG-ARI against the clips' ground-truth masks.
    """

    def __init__(
        self,
        num_slots: int = 6,
        slot_dim: int = 64,
        feature_dim: int = 64,
        image_size: int = 48,
        patch_size: int = 8,
        init_strategy: str = "learned",
        steps: int = 3000,
        batch_size: int = 16,
        segment_length: int = 4,
        peak_lr: float = 4e-4,
        warmup_steps: int = 500,
        decay_steps: int = 3000,
        grad_clip: float = 0.05,
        temperature: float = 0.1,
        contrast_weight: float = 0.5,
        contrast_mode: str = "batch",
        seed: int = 0,
        work_dir: str | None = None,
    ):
        self.num_slots = num_slots
        self.slot_dim = slot_dim
        self.feature_dim = feature_dim
        self.image_size = image_size
        self.patch_size = patch_size
        self.init_strategy = init_strategy
        self.steps = steps
        self.batch_size = batch_size
        self.segment_length = segment_length
        self.peak_lr = peak_lr
        self.warmup_steps = warmup_steps
        self.decay_steps = decay_steps
        self.grad_clip = grad_clip
        self.temperature = temperature
        self.contrast_weight = contrast_weight
        self.contrast_mode = contrast_mode
        self.seed = seed
        self.work_dir = work_dir

    def _configs(self) -> tuple[ModelConfig, TrainConfig]:
        model_cfg = ModelConfig(
            num_slots=self.num_slots,
            slot_dim=self.slot_dim,
            feature_dim=self.feature_dim,
            image_size=self.image_size,
            patch_size=self.patch_size,
            init_strategy=self.init_strategy,
        )
        train_cfg = TrainConfig(
            steps=self.steps,
            batch_size=self.batch_size,
            segment_length=self.segment_length,
            peak_lr=self.peak_lr,
            warmup_steps=self.warmup_steps,
            decay_steps=self.decay_steps,
            grad_clip=self.grad_clip,
            temperature=self.temperature,
            contrast_weight=self.contrast_weight,
            contrast_mode=self.contrast_mode,
            seed=self.seed,
        )
        return model_cfg, train_cfg

    def _validate_clips(self, X) -> list:
        clips = as_clip_list(X) if not isinstance(X, (str,)) else list(dataset_from_source(X))
        for clip in clips:
            problems = validate_clip(clip)
            if problems:
                raise ValueError(f"invalid clip {clip.clip_id}: {problems[0]}")
        return clips

    def fit(self, X, y=None):
        clips = self._validate_clips(X)
        dataset = dataset_from_source(clips)
        model_cfg, train_cfg = self._configs()
        work_dir = self.work_dir or tempfile.mkdtemp(prefix="slotvideo_fit_")
        result = train(model_cfg, train_cfg, dataset, work_dir)
        self.model_ = result.model
        self.runlog_ = result.runlog
        self.checkpoint_path_ = result.checkpoint_path
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")

    def transform(self, X) -> list[np.ndarray]:
        self._check_fitted()
        return [slots_for_clip(self.model_, clip).numpy() for clip in self._validate_clips(X)]

    def predict(self, X) -> list[np.ndarray]:
        self._check_fitted()
        masks = []
        for clip in self._validate_clips(X):
            slots = slots_for_clip(self.model_, clip)
            masks.append(pixel_masks_for_slots(self.model_, slots, *clip.resolution))
        return masks

    def score(self, X, y=None) -> float:
        self._check_fitted()
        report = evaluate(self.model_, dataset_from_source(self._validate_clips(X)), image_metrics=False)
        return report.video_fg_ari if report.video_fg_ari is not None else float("nan")


class SlotDynamicsForecaster(BaseEstimator):
    """Autoregressive slot forecaster with a fit/predict interface.

    fit(X) accepts a SlotBank or a sequence of slot arrays [T, K, D_slot];
    predict(X) takes burn-in windows [B, T_b, K, D_slot] (or a single
    window) and returns the rolled-out future slots.
    """

    def __init__(
        self,
        burn_in: int = 4,
        rollout: int = 4,
        latent_dim: int = 128,
        ffn_dim: int = 512,
        layers: int = 1,
        heads: int = 4,
        dropout: float = 0.2,
        peak_lr: float = 2e-4,
        steps: int = 2000,
        batch_size: int = 32,
        residual: bool = False,
        seed: int = 0,
    ):
        self.burn_in = burn_in
        self.rollout = rollout
        self.latent_dim = latent_dim
        self.ffn_dim = ffn_dim
        self.layers = layers
        self.heads = heads
        self.dropout = dropout
        self.peak_lr = peak_lr
        self.steps = steps
        self.batch_size = batch_size
        self.residual = residual
        self.seed = seed

    def _config(self) -> DynamicsConfig:
        return DynamicsConfig(
            burn_in=self.burn_in,
            rollout=self.rollout,
            latent_dim=self.latent_dim,
            ffn_dim=self.ffn_dim,
            layers=self.layers,
            heads=self.heads,
            dropout=self.dropout,
            peak_lr=self.peak_lr,
            steps=self.steps,
            batch_size=self.batch_size,
            residual=self.residual,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        from .dynamics import train_dynamics

        if isinstance(X, SlotBank):
            bank = X
        else:
            arrays = [np.asarray(a, dtype=np.float32) for a in X]
            bank = SlotBank(
                slots={f"clip_{i:04d}": a for i, a in enumerate(arrays)}, checkpoint_hash="adhoc"
            )
        self.model_, self.runlog_ = train_dynamics(bank, self._config())
        return self

    def predict(self, X, steps: int | None = None) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")
        arr = np.asarray(X)
        single = arr.ndim == 3
        if single:
            arr = arr[None]
        dtype = next(self.model_.parameters()).dtype
        with torch.no_grad():
            out = self.model_.rollout(torch.as_tensor(arr, dtype=dtype), steps or self.rollout).numpy()
        return out[0] if single else out
