"""Shared domain types and input validation.

All array-holding types are immutable after construction (their buffers are
marked read-only), so instances can be shared freely across workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _freeze(*arrays: np.ndarray) -> None:
    for arr in arrays:
        arr.setflags(write=False)


@dataclass(frozen=True)
class VideoClip:
    """A video with ground-truth instance masks and per-object visibility.

    frames: float array [T, H, W, C], values in [0, 1].
    gt_masks: int array [T, H, W]; id 0 is background, ids 1..M are objects.
    visibility: int array [T, M]; visibility[t, m] is the pixel count of
        object id m+1 in frame t.
    """

    frames: np.ndarray
    gt_masks: np.ndarray
    visibility: np.ndarray
    clip_id: str

    def __post_init__(self):
        _freeze(self.frames, self.gt_masks, self.visibility)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def resolution(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    @property
    def num_objects(self) -> int:
        return self.visibility.shape[1]


@dataclass(frozen=True)
class FeatureSequence:
    """Per-frame patch features: raw backbone output and adapted features.

    raw: [T, N, D_feat]; adapted: [T, N, D]; grid: (rows, cols) with
    rows * cols == N.
    """

    raw: np.ndarray
    adapted: np.ndarray
    grid: tuple[int, int]

    def __post_init__(self):
        _freeze(self.raw, self.adapted)


@dataclass(frozen=True)
class SlotSequence:
    """Per-frame slot matrices from the recurrent grouping run.

    corrected: [T, K, D_slot] (grouping output, used for decoding/losses);
    predicted: [T, K, D_slot] (predictor output, initializes the next frame);
    init: [K, D_slot] (first-frame initialization).
    """

    corrected: np.ndarray
    predicted: np.ndarray
    init: np.ndarray

    def __post_init__(self):
        _freeze(self.corrected, self.predicted, self.init)


@dataclass(frozen=True)
class MaskSequence:
    """Decoder alpha masks over tokens plus their pixel-level argmax labels.

    token_masks: [T, K, N], nonnegative, summing to 1 over slots per token;
    pixel_masks: [T, H, W] with values in 0..K-1.
    """

    token_masks: np.ndarray
    pixel_masks: np.ndarray

    def __post_init__(self):
        _freeze(self.token_masks, self.pixel_masks)


def validate_clip(clip: VideoClip) -> list[str]:
    """Check all VideoClip invariants; returns a list of violation messages.

    An empty list means the clip is well-formed. Each violation names the
    offending field and index. Pure reporting: never raises on bad content.
    """
    violations: list[str] = []
    frames, masks, vis = clip.frames, clip.gt_masks, clip.visibility

    if frames.ndim != 4:
        violations.append(f"frames: expected 4 dims [T, H, W, C], got shape {frames.shape}")
        return violations
    if masks.ndim != 3:
        violations.append(f"gt_masks: expected 3 dims [T, H, W], got shape {masks.shape}")
        return violations
    if vis.ndim != 2:
        violations.append(f"visibility: expected 2 dims [T, M], got shape {vis.shape}")
        return violations

    t, h, w = frames.shape[:3]
    if t < 1:
        violations.append("frames: T must be >= 1")
    if masks.shape != (t, h, w):
        violations.append(f"gt_masks: shape {masks.shape} does not match frames {(t, h, w)}")
        return violations
    if vis.shape[0] != t:
        violations.append(f"visibility: {vis.shape[0]} rows for {t} frames")
        return violations

    if not np.isfinite(frames).all():
        violations.append("frames: non-finite values")
    if frames.size and (frames.min() < 0.0 or frames.max() > 1.0):
        violations.append("frames: values outside [0, 1]")

    num_objects = vis.shape[1]
    ids = np.unique(masks)
    for mask_id in ids:
        if mask_id != 0 and not (1 <= mask_id <= num_objects):
            violations.append(f"gt_masks: id {int(mask_id)} outside 0..{num_objects}")

    counts = np.stack(
        [np.bincount(masks[i].ravel(), minlength=num_objects + 1)[1 : num_objects + 1] for i in range(t)]
    )
    mismatch = np.argwhere(counts != vis)
    for frame_idx, obj_idx in mismatch:
        violations.append(
            f"visibility[{frame_idx}, {obj_idx}]: recorded {int(vis[frame_idx, obj_idx])}, "
            f"rendered {int(counts[frame_idx, obj_idx])}"
        )
    return violations


def as_clip_list(data) -> list[VideoClip]:
    """Coerce estimator/CLI input into a list of VideoClip, validating types."""
    if isinstance(data, VideoClip):
        return [data]
    clips = list(data)
    for item in clips:
        if not isinstance(item, VideoClip):
            raise TypeError(f"expected VideoClip items, got {type(item).__name__}")
    return clips
