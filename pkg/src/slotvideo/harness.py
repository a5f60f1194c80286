"""Training loop, schedules, checkpointing, and evaluation orchestration.

The optimizer is Adam with linear warmup to the peak learning rate followed
by exponential decay to 1/100 of the peak over the decay horizon, and global
gradient-norm clipping. Runs are fully seeded: model initialization, segment
sampling, and any stochastic slot initialization all derive from the config
seed, so two runs with identical config and platform produce identical loss
curves. A non-finite loss aborts training after writing a diagnostic
snapshot.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig, TrainConfig, config_from_dict, config_to_dict
from .core import VideoClip
from .data import ClipDataset, DatasetManifest
from .decoder import masks_to_pixels
from .dynamics import SlotBank, SlotDynamicsModel, save_bank
from .grouping import run_sequence
from .losses import total_loss
from .metrics import MetricReport, evaluate_predictions
from .model import GroupingModel, parameter_hash

LR_DECAY_FLOOR = 0.01  # exponential decay target: peak/100 at the horizon


def lr_at_step(step: int, peak: float, warmup_steps: int, decay_steps: int) -> float:
    """Linear warmup from 0 to peak, then exponential decay."""
    if warmup_steps > 0 and step < warmup_steps:
        return peak * step / warmup_steps
    if decay_steps <= 0:
        return peak
    return peak * LR_DECAY_FLOOR ** ((step - warmup_steps) / decay_steps)


def clip_seed(clip_id: str, base: int = 0) -> int:
    """Stable per-clip seed for stochastic slot initialization at eval."""
    digest = hashlib.sha256(f"{base}:{clip_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class RunLog:
    """Per-step training trace plus periodic evaluation snapshots."""

    total: list[float] = field(default_factory=list)
    rec: list[float] = field(default_factory=list)
    contrast: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    clipped_grad_norm: list[float] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "rec": self.rec,
            "contrast": self.contrast,
            "lr": self.lr,
            "grad_norm": self.grad_norm,
            "clipped_grad_norm": self.clipped_grad_norm,
            "evals": self.evals,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def save_checkpoint(path, model: GroupingModel, train_cfg: TrainConfig, step: int, optimizer=None) -> str:
    payload = {
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "model_config": config_to_dict(model.cfg),
        "train_config": config_to_dict(train_cfg),
        "step": step,
        "param_hash": parameter_hash(model),
    }
    torch.save(payload, path)
    return payload["param_hash"]


def load_checkpoint(path) -> tuple[GroupingModel, TrainConfig, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model_cfg = config_from_dict(ModelConfig, payload["model_config"])
    model = GroupingModel(model_cfg)
    model.load_state_dict(payload["model"])
    model.eval()
    train_cfg = config_from_dict(TrainConfig, payload["train_config"])
    return model, train_cfg, payload


def _grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(p.grad.detach().pow(2).sum())
    return math.sqrt(total)


@dataclass
class TrainResult:
    model: GroupingModel
    runlog: RunLog
    checkpoint_path: Path
    best_checkpoint_path: Path | None


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_data,
    out_dir,
    val_data=None,
    val_manifest: DatasetManifest | None = None,
) -> TrainResult:
    """Train a grouping model; returns the final model, log, and checkpoints."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(train_cfg.seed)
    model = GroupingModel(model_cfg)
    params = model.trainable_parameters()
    optimizer = torch.optim.Adam(params, lr=0.0)
    init_generator = torch.Generator().manual_seed(train_cfg.seed + 1)

    runlog = RunLog()
    best_score, best_path = -math.inf, None
    step, epoch = 0, 0

    from .data import batch_segments  # local import avoids cycle at module load

    while step < train_cfg.steps:
        progressed = False
        for batch in batch_segments(
            train_data, train_cfg.segment_length, train_cfg.batch_size, seed=train_cfg.seed + epoch
        ):
            progressed = True
            lr = lr_at_step(step, train_cfg.peak_lr, train_cfg.warmup_steps, train_cfg.decay_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr

            frames = torch.as_tensor(batch.frames, dtype=model.dtype)
            try:
                out = model(frames, clip_ids=batch.clip_ids, generator=init_generator)
                breakdown = total_loss(
                    out.raw.detach(),
                    out.recon,
                    out.rollout.corrected,
                    alpha=train_cfg.contrast_weight,
                    temperature=train_cfg.temperature,
                    mode=train_cfg.contrast_mode,
                    exclude_positive=train_cfg.exclude_positive,
                )
                finite = bool(torch.isfinite(breakdown.total))
            except ValueError as err:
                # a blowup usually surfaces as NaN inside the forward first
                if "NaN" not in str(err) and "zero-norm" not in str(err):
                    raise
                finite = False
            if not finite:
                snapshot = out_dir / "diagnostic_nan.pt"
                save_checkpoint(snapshot, model, train_cfg, step, optimizer)
                runlog.save(out_dir / "runlog.json")
                raise RuntimeError(
                    f"non-finite loss at step {step}; diagnostic snapshot at {snapshot}"
                )

            optimizer.zero_grad()
            breakdown.total.backward()
            pre_norm = float(torch.nn.utils.clip_grad_norm_(params, train_cfg.grad_clip))
            post_norm = _grad_norm(params)
            optimizer.step()

            runlog.total.append(float(breakdown.total.detach()))
            runlog.rec.append(float(breakdown.rec.detach()))
            runlog.contrast.append(float(breakdown.contrast.detach()))
            runlog.lr.append(lr)
            runlog.grad_norm.append(pre_norm)
            runlog.clipped_grad_norm.append(post_norm)
            step += 1

            if val_data is not None and (step % train_cfg.eval_every == 0 or step == train_cfg.steps):
                model.eval()
                report = evaluate(
                    model,
                    val_data,
                    image_metrics=False,
                    max_clips=train_cfg.eval_clips,
                    keep_objects=val_manifest.occluded_objects if val_manifest else None,
                )
                model.train()
                runlog.evals.append({"step": step, **{k: v for k, v in report.to_dict().items() if k != "per_clip"}})
                score = report.video_fg_ari if report.video_fg_ari is not None else -math.inf
                if score > best_score:
                    best_score = score
                    best_path = out_dir / "best.pt"
                    save_checkpoint(best_path, model, train_cfg, step, optimizer)
            if step >= train_cfg.steps:
                break
        if not progressed:
            raise ValueError("dataset produced no batches (fewer clips than batch size?)")
        epoch += 1

    model.eval()
    final_path = out_dir / "final.pt"
    save_checkpoint(final_path, model, train_cfg, step, optimizer)
    runlog.save(out_dir / "runlog.json")
    return TrainResult(model=model, runlog=runlog, checkpoint_path=final_path, best_checkpoint_path=best_path)


def slots_for_clip(model: GroupingModel, clip: VideoClip) -> torch.Tensor:
    """Corrected slots [T, K, D_slot] for one full clip, deterministically."""
    with torch.no_grad():
        frames = torch.tensor(clip.frames, dtype=model.dtype).unsqueeze(0)
        raw = model.extract(frames, clip_ids=[clip.clip_id])
        adapted = model.adapter(raw)
        generator = torch.Generator().manual_seed(clip_seed(clip.clip_id))
        rollout = run_sequence(
            adapted,
            model.slot_attention,
            model.predictor,
            model.slot_init,
            model.cfg.sa_iters_first,
            model.cfg.sa_iters_other,
            generator=generator,
        )
    return rollout.corrected[0]


def pixel_masks_for_slots(model: GroupingModel, slots: torch.Tensor, height: int, width: int) -> np.ndarray:
    """Decode [F, K, D_slot] slots and upsample masks to pixel labels [F, H, W]."""
    with torch.no_grad():
        _, token_masks = model.decode_slots(slots)
    return masks_to_pixels(token_masks.numpy().astype(np.float64), model.cfg.grid, height, width)


def evaluate(
    model: GroupingModel,
    dataset,
    image_metrics: bool = True,
    keep_objects: dict | None = None,
    frame_range: tuple[int, int] | None = None,
    max_clips: int = 0,
    active_threshold: float = 0.005,
) -> MetricReport:
    """Score a dataset with the grouping model.

    frame_range restricts decoding and scoring to frames [start, stop); the
    recurrence still runs from frame 0. keep_objects applies the
    occluded-subset protocol (only listed instance ids remain foreground).
    """
    model.eval()
    predictions, gts = {}, {}
    count = len(dataset) if max_clips <= 0 else min(max_clips, len(dataset))
    for idx in range(count):
        clip = dataset[idx]
        slots = slots_for_clip(model, clip)
        gt = clip.gt_masks
        if frame_range is not None:
            slots = slots[frame_range[0] : frame_range[1]]
            gt = gt[frame_range[0] : frame_range[1]]
        height, width = clip.resolution
        predictions[clip.clip_id] = pixel_masks_for_slots(model, slots, height, width)
        gts[clip.clip_id] = gt
    return evaluate_predictions(
        predictions,
        gts,
        num_slots=model.cfg.num_slots,
        image_metrics=image_metrics,
        active_threshold=active_threshold,
        keep_objects=keep_objects,
    )


def export_slots(model: GroupingModel, dataset, out_path) -> SlotBank:
    """Run the frozen grouping model over full clips and persist the slots."""
    model.eval()
    slots = {}
    for idx in range(len(dataset)):
        clip = dataset[idx]
        slots[clip.clip_id] = slots_for_clip(model, clip).numpy()
    bank = SlotBank(slots=slots, checkpoint_hash=parameter_hash(model))
    save_bank(out_path, bank)
    return bank


def evaluate_dynamics(
    dynamics_model: SlotDynamicsModel,
    bank: SlotBank,
    grouping_model: GroupingModel,
    dataset,
    pass_through: bool = False,
    image_metrics: bool = True,
) -> MetricReport:
    """Score decoded rollout predictions against future ground-truth masks.

    The bank must come from the given grouping checkpoint (hash-checked).
    With pass_through=True the bank's own future slots are decoded instead
    of rollouts, which reproduces the grouping model's metrics on those
    frames.
    """
    expected = parameter_hash(grouping_model)
    if bank.checkpoint_hash != expected:
        raise ValueError(
            "slot bank was exported from a different grouping checkpoint "
            f"({bank.checkpoint_hash[:12]} != {expected[:12]})"
        )
    cfg = dynamics_model.cfg
    dynamics_model.eval()
    grouping_model.eval()
    dyn_dtype = next(dynamics_model.parameters()).dtype
    predictions, gts = {}, {}
    for idx in range(len(dataset)):
        clip = dataset[idx]
        if clip.clip_id not in bank.slots:
            continue
        stored = bank.slots[clip.clip_id]
        t_total = stored.shape[0]
        if cfg.burn_in + cfg.rollout > t_total:
            raise ValueError(f"clip {clip.clip_id} too short for burn_in + rollout")
        if pass_through:
            future = torch.as_tensor(stored, dtype=grouping_model.dtype)[
                cfg.burn_in : cfg.burn_in + cfg.rollout
            ]
        else:
            burnin = torch.as_tensor(stored, dtype=dyn_dtype)[: cfg.burn_in]
            with torch.no_grad():
                future = dynamics_model.rollout(burnin.unsqueeze(0), cfg.rollout)[0]
            future = future.to(grouping_model.dtype)
        height, width = clip.resolution
        predictions[clip.clip_id] = pixel_masks_for_slots(grouping_model, future, height, width)
        gts[clip.clip_id] = clip.gt_masks[cfg.burn_in : cfg.burn_in + cfg.rollout]
    return evaluate_predictions(
        predictions, gts, num_slots=grouping_model.cfg.num_slots, image_metrics=image_metrics
    )


def dataset_from_source(source) -> ClipDataset:
    """Accept a ClipDataset, a manifest path, or an iterable of clips."""
    from .data import load_dataset

    if isinstance(source, ClipDataset):
        return source
    if isinstance(source, (str, Path)):
        return load_dataset(source)
    return ClipDataset.from_clips(source)
