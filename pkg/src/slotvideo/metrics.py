"""Segmentation quality metrics for video object discovery.

FG-ARI is the adjusted Rand index over foreground pixels (ground-truth id 0
is excluded). The video variant flattens all frames into a single labeling,
so a slot that swaps objects mid-video is penalized even if every individual
frame is segmented perfectly; the image variant scores frames independently
and averages. mBO matches each ground-truth instance to its best-IoU
predicted mask and averages the best overlaps; masks are spatio-temporal, so
id consistency matters there too.

Predictions are integer pixel labelings (decoder argmax); soft masks never
reach this module.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _contingency(gt: np.ndarray, pred: np.ndarray) -> np.ndarray:
    gt_ids, gt_idx = np.unique(gt, return_inverse=True)
    pred_ids, pred_idx = np.unique(pred, return_inverse=True)
    table = np.zeros((gt_ids.size, pred_ids.size), dtype=np.int64)
    np.add.at(table, (gt_idx, pred_idx), 1)
    return table


def _ari_from_contingency(table: np.ndarray) -> float:
    # Exact integer pair counting with one final division, so rational scores
    # like -1/2 come out exact; the 0/0 case (both partitions trivial) is 1.0.
    def comb2(x: int) -> int:
        return x * (x - 1) // 2

    cells = sum(comb2(int(v)) for v in table.ravel())
    rows = sum(comb2(int(v)) for v in table.sum(axis=1))
    cols = sum(comb2(int(v)) for v in table.sum(axis=0))
    pairs = comb2(int(table.sum()))
    numerator = 2 * (cells * pairs - rows * cols)
    denominator = (rows + cols) * pairs - 2 * rows * cols
    if denominator == 0:
        return 1.0
    return numerator / denominator


def fg_ari(pred: np.ndarray, gt: np.ndarray, mode: str = "video") -> float | None:
    """Foreground adjusted Rand index between labelings of shape [T, H, W].

    Pixels with gt == 0 are excluded. mode "video" scores the flattened clip
    as one partition pair; mode "image" scores each frame with at least one
    foreground pixel and averages. Returns None when no frame has foreground
    (undefined, reported as skipped by the aggregator).
    """
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if mode not in ("video", "image"):
        raise ValueError(f"unknown mode: {mode}")
    if mode == "video":
        fg = gt > 0
        if not fg.any():
            return None
        return _ari_from_contingency(_contingency(gt[fg], pred[fg]))
    scores = []
    for t in range(gt.shape[0]):
        fg = gt[t] > 0
        if not fg.any():
            continue
        scores.append(_ari_from_contingency(_contingency(gt[t][fg], pred[t][fg])))
    if not scores:
        return None
    return float(np.mean(scores))


def mbo(pred: np.ndarray, gt: np.ndarray) -> float | None:
    """Mean best overlap between spatio-temporal masks of shape [T, H, W].

    For each ground-truth instance (ids >= 1), the predicted mask with the
    highest IoU is selected; the mean of these best IoUs is returned.
    Background is not matched, but all pixels participate in the IoU
    denominators. Negative prediction labels mark pixels belonging to no
    predicted mask (an argmax labeling never produces them, but an instance
    with zero overlap against every predicted mask then scores 0). Returns
    None when the clip has no ground-truth instances.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    gt_ids = [i for i in np.unique(gt) if i != 0]
    if not gt_ids:
        return None
    pred_ids = [p for p in np.unique(pred) if p >= 0]
    best = []
    for g in gt_ids:
        gt_mask = gt == g
        gt_size = gt_mask.sum()
        ious = []
        for p in pred_ids:
            pred_mask = pred == p
            inter = np.logical_and(gt_mask, pred_mask).sum()
            union = gt_size + pred_mask.sum() - inter
            ious.append(inter / union if union > 0 else 0.0)
        best.append(max(ious) if ious else 0.0)
    return float(np.mean(best))


def active_slots(pixel_masks: np.ndarray, num_slots: int, threshold: float = 0.005) -> int:
    """Number of slots that win the argmax for >= threshold of some frame.

    A slot counts as active if, in at least one frame, it is the label of at
    least max(1, threshold * H * W) pixels (threshold 0 therefore counts any
    slot winning a single pixel).
    """
    t, h, w = pixel_masks.shape
    min_pixels = max(1, int(np.ceil(threshold * h * w)))
    counts = np.stack([np.bincount(pixel_masks[i].ravel(), minlength=num_slots) for i in range(t)])
    return int((counts.max(axis=0) >= min_pixels).sum())


@dataclass
class MetricReport:
    """Dataset-level evaluation summary."""

    video_fg_ari: float | None = None
    image_fg_ari: float | None = None
    video_mbo: float | None = None
    per_clip_video_fg_ari: dict[str, float] = field(default_factory=dict)
    per_clip_image_fg_ari: dict[str, float] = field(default_factory=dict)
    per_clip_video_mbo: dict[str, float] = field(default_factory=dict)
    active_slot_histogram: list[int] = field(default_factory=list)
    per_clip_active_slots: dict[str, int] = field(default_factory=dict)
    clip_count: int = 0
    skipped_clips: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "video_fg_ari": self.video_fg_ari,
            "image_fg_ari": self.image_fg_ari,
            "video_mbo": self.video_mbo,
            "clip_count": self.clip_count,
            "skipped_clips": list(self.skipped_clips),
            "active_slot_histogram": list(self.active_slot_histogram),
            "per_clip": {
                "video_fg_ari": dict(self.per_clip_video_fg_ari),
                "image_fg_ari": dict(self.per_clip_image_fg_ari),
                "video_mbo": dict(self.per_clip_video_mbo),
                "active_slots": dict(self.per_clip_active_slots),
            },
        }

    @property
    def mean_active_slots(self) -> float | None:
        if not self.per_clip_active_slots:
            return None
        return float(np.mean(list(self.per_clip_active_slots.values())))


def restrict_gt_to_objects(gt: np.ndarray, keep_ids) -> np.ndarray:
    """Zero out every ground-truth instance not listed in keep_ids."""
    out = np.where(np.isin(gt, list(keep_ids)), gt, 0)
    return out.astype(gt.dtype)


def evaluate_predictions(
    predictions: dict[str, np.ndarray],
    gt_masks: dict[str, np.ndarray],
    num_slots: int,
    image_metrics: bool = True,
    active_threshold: float = 0.005,
    keep_objects: dict[str, list[int]] | None = None,
) -> MetricReport:
    """Aggregate per-clip metrics over a dataset.

    predictions and gt_masks map clip_id to integer labelings [T, H, W];
    clip order follows sorted(predictions). keep_objects, when given,
    restricts each clip's ground truth to the listed instance ids before
    scoring (the occluded-subset protocol). Clips whose (possibly
    restricted) ground truth has no foreground are reported as skipped.
    """
    report = MetricReport(active_slot_histogram=[0] * (num_slots + 1))
    for clip_id in sorted(predictions):
        pred = predictions[clip_id]
        gt = gt_masks[clip_id]
        if keep_objects is not None:
            gt = restrict_gt_to_objects(gt, keep_objects.get(clip_id, []))
        report.clip_count += 1

        n_active = active_slots(pred, num_slots, active_threshold)
        report.per_clip_active_slots[clip_id] = n_active
        report.active_slot_histogram[n_active] += 1

        v_ari = fg_ari(pred, gt, mode="video")
        if v_ari is None:
            report.skipped_clips.append(clip_id)
            continue
        report.per_clip_video_fg_ari[clip_id] = v_ari
        report.per_clip_video_mbo[clip_id] = mbo(pred, gt)
        if image_metrics:
            report.per_clip_image_fg_ari[clip_id] = fg_ari(pred, gt, mode="image")

    if report.per_clip_video_fg_ari:
        report.video_fg_ari = float(np.mean(list(report.per_clip_video_fg_ari.values())))
        report.video_mbo = float(np.mean(list(report.per_clip_video_mbo.values())))
    if report.per_clip_image_fg_ari:
        report.image_fg_ari = float(np.mean(list(report.per_clip_image_fg_ari.values())))
    return report
