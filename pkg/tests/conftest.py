from __future__ import annotations

import numpy as np
import pytest
import torch

from slotvideo.core import VideoClip


@pytest.fixture(autouse=True)
def _default_dtype():
    # oracle and property tests run at 64-bit; training modules opt into 32-bit
    old = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(old)


def make_clip(gt_frames, colors=None, clip_id="clip") -> VideoClip:
    """Build a well-formed VideoClip from a [T, H, W] integer id map."""
    gt = np.asarray(gt_frames, dtype=np.int32)
    t, h, w = gt.shape
    m = int(gt.max())
    if colors is None:
        colors = np.linspace(0.1, 0.9, m + 1)
    frames = np.zeros((t, h, w, 3), dtype=np.float32)
    for i in range(m + 1):
        frames[gt == i] = colors[i]
    vis = np.stack(
        [np.bincount(gt[i].ravel(), minlength=m + 1)[1 : m + 1] for i in range(t)]
    ).astype(np.int32)
    return VideoClip(frames=frames, gt_masks=gt, visibility=vis, clip_id=clip_id)
