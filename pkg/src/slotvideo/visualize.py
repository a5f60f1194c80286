"""Static figure emission: mask overlays, feature PCA, slot similarity, histograms."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from .core import VideoClip
from .encoder import pca_rgb
from .harness import slots_for_clip
from .metrics import MetricReport

_COLORS = plt.get_cmap("tab10")


def _overlay(frame: np.ndarray, labels: np.ndarray, alpha: float = 0.55) -> np.ndarray:
    out = frame.copy()
    for k in np.unique(labels):
        color = np.array(_COLORS(int(k) % 10)[:3])
        mask = labels == k
        out[mask] = (1 - alpha) * out[mask] + alpha * color
    return np.clip(out, 0.0, 1.0)


def mask_overlay_strip(clip: VideoClip, pixel_masks: np.ndarray, out_path) -> Path:
    """One panel per frame: predicted segmentation blended over the video."""
    t = clip.num_frames
    fig, axes = plt.subplots(2, t, figsize=(1.6 * t, 3.4))
    for i in range(t):
        axes[0, i].imshow(clip.frames[i])
        axes[0, i].set_title(f"t={i}", fontsize=8)
        axes[1, i].imshow(_overlay(clip.frames[i], pixel_masks[i]))
        for row in range(2):
            axes[row, i].axis("off")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)


def pca_comparison(model, clip: VideoClip, out_path) -> Path:
    """Side-by-side PCA RGB images of raw vs. adapted features (frame 0)."""
    with torch.no_grad():
        frames = torch.tensor(clip.frames, dtype=model.dtype).unsqueeze(0)
        raw = model.extract(frames, clip_ids=[clip.clip_id])
        adapted = model.adapter(raw)
    grid = model.cfg.grid
    raw_img = pca_rgb(raw[0, 0].numpy(), grid)
    adapted_img = pca_rgb(adapted[0, 0].numpy(), grid)
    fig, axes = plt.subplots(1, 3, figsize=(7.5, 2.8))
    axes[0].imshow(clip.frames[0])
    axes[0].set_title("frame")
    axes[1].imshow(raw_img)
    axes[1].set_title("raw features PCA")
    axes[2].imshow(adapted_img)
    axes[2].set_title("adapted features PCA")
    for ax in axes:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)


def cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / np.maximum(norms, 1e-12)
    return unit @ unit.T


def slot_similarity_heatmaps(model, clip: VideoClip, out_path) -> Path:
    """Cosine-similarity heatmaps of the initialization and first-frame slots."""
    init = model.slot_init(1)[0].detach().numpy() if model.cfg.init_strategy == "learned" else None
    slots = slots_for_clip(model, clip).numpy()
    panels = []
    if init is not None:
        panels.append(("initial slots", cosine_matrix(init)))
    panels.append(("first-frame slots", cosine_matrix(slots[0])))
    fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.4), squeeze=False)
    for ax, (title, sim) in zip(axes[0], panels):
        im = ax.imshow(sim, vmin=-1, vmax=1, cmap="RdBu_r")
        ax.set_title(title)
        ax.set_xlabel("slot")
        ax.set_ylabel("slot")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)


def active_slot_histogram(report: MetricReport, gt_counts: list[int], out_path) -> Path:
    """Predicted active-slot counts next to ground-truth object counts."""
    num_bins = len(report.active_slot_histogram)
    bins = np.arange(num_bins)
    gt_hist = np.bincount(gt_counts, minlength=num_bins)[:num_bins]
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    width = 0.4
    ax.bar(bins - width / 2, gt_hist, width=width, label="ground-truth objects")
    ax.bar(bins + width / 2, report.active_slot_histogram, width=width, label="active slots")
    ax.set_xlabel("count per clip")
    ax.set_ylabel("clips")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)
