"""Patch feature extraction and the trainable feature adapter.

Two backbone kinds produce the raw per-frame token features: a small strided
conv stem with learned positional encodings (self-contained, optionally
frozen), or verbatim import of precomputed feature files (one container per
clip, array [T, N, D_feat] plus the token grid). The adapter is a token-wise
MLP that maps raw features into the space the grouping module operates on;
when the backbone is frozen, gradient reaches only the adapter.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .container import load_arrays, save_arrays

_ACTIVATIONS = {"relu": nn.ReLU, "gelu": nn.GELU, "tanh": nn.Tanh}


def _stride_plan(patch_size: int) -> list[int]:
    strides = []
    remaining = patch_size
    while remaining > 1:
        if remaining % 2 != 0:
            raise ValueError(f"patch_size must be a power of two, got {patch_size}")
        strides.append(2)
        remaining //= 2
    while len(strides) < 3:
        strides.append(1)
    if len(strides) > 3:
        raise ValueError(f"patch_size {patch_size} too large for a 3-block stem")
    return strides


class ConvPatchEncoder(nn.Module):
    """3-block strided conv stem mapping frames to a token grid.

    Input [B, H, W, C] in [0, 1]; output [B, N, out_dim] with
    N = (H / patch) * (W / patch). Content tokens are normalized to unit
    scale before a small learned positional encoding is added, so token
    identity stays dominated by patch content; kernels use orthogonal init
    (the stem is useful as a frozen random feature extractor). With
    frozen=True the parameters are excluded from training.
    """

    def __init__(
        self,
        image_size: int,
        patch_size: int = 8,
        in_channels: int = 3,
        widths: tuple[int, ...] = (32, 64),
        out_dim: int = 64,
        frozen: bool = True,
    ):
        super().__init__()
        if image_size % patch_size != 0:
            raise ValueError("image resolution must be divisible by patch size")
        strides = _stride_plan(patch_size)
        channels = [in_channels, *widths, out_dim]
        if len(channels) != 4:
            raise ValueError("backbone_widths must list the two intermediate widths")
        blocks = []
        for i, stride in enumerate(strides):
            conv = nn.Conv2d(channels[i], channels[i + 1], kernel_size=3, stride=stride, padding=1)
            nn.init.orthogonal_(conv.weight, gain=1.414 if i < len(strides) - 1 else 1.0)
            blocks.append(conv)
            if i < len(strides) - 1:
                blocks.append(nn.ReLU())
        self.stem = nn.Sequential(*blocks)
        self.norm = nn.LayerNorm(out_dim, elementwise_affine=False)
        side = image_size // patch_size
        self.grid = (side, side)
        self.pos_embed = nn.Parameter(torch.randn(side * side, out_dim) * 0.1)
        self.out_dim = out_dim
        self.frozen = frozen
        if frozen:
            self.requires_grad_(False)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        x = frames.permute(0, 3, 1, 2)
        feat = self.stem(x)  # [B, D, rows, cols]
        tokens = self.norm(feat.flatten(2).transpose(1, 2))
        return tokens + self.pos_embed


class FeatureAdapter(nn.Module):
    """Token-wise MLP adapting raw backbone features for grouping."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        hidden: tuple[int, ...] = (),
        activation: str = "relu",
    ):
        super().__init__()
        act = _ACTIVATIONS[activation]
        dims = [in_dim, *hidden, out_dim]
        layers = []
        for i in range(len(dims) - 1):
            layers.append(nn.Linear(dims[i], dims[i + 1]))
            if i < len(dims) - 2:
                layers.append(act())
        self.mlp = nn.Sequential(*layers)

    def forward(self, raw: torch.Tensor) -> torch.Tensor:
        return self.mlp(raw)


def extract_features(frames: torch.Tensor, backbone: ConvPatchEncoder) -> torch.Tensor:
    """Run the backbone over [B, T, H, W, C] (or unbatched [T, H, W, C]) frames."""
    squeeze = frames.ndim == 4
    if squeeze:
        frames = frames.unsqueeze(0)
    b, t = frames.shape[:2]
    tokens = backbone(frames.reshape(b * t, *frames.shape[2:]))
    tokens = tokens.reshape(b, t, *tokens.shape[1:])
    return tokens.squeeze(0) if squeeze else tokens


def save_feature_file(path, raw: np.ndarray, grid: tuple[int, int], clip_id: str) -> None:
    save_arrays(
        path,
        {"raw": raw},
        meta={"clip_id": clip_id, "grid": list(grid), "kind": "features", "version": 1},
    )


def load_feature_file(path) -> tuple[np.ndarray, tuple[int, int]]:
    """Read a precomputed feature file verbatim: ([T, N, D_feat], grid)."""
    arrays, meta = load_arrays(path)
    raw = arrays["raw"]
    grid = tuple(meta["grid"])
    if grid[0] * grid[1] != raw.shape[-2]:
        raise ValueError(f"feature grid {grid} inconsistent with {raw.shape[-2]} tokens")
    return raw, grid


class ImportBackbone:
    """Feature source that returns stored per-clip features verbatim."""

    def __init__(self, feature_dir, out_dim: int):
        from pathlib import Path

        self.feature_dir = Path(feature_dir)
        self.out_dim = out_dim
        self.frozen = True

    def features_for(self, clip_id: str) -> tuple[np.ndarray, tuple[int, int]]:
        path = self.feature_dir / f"{clip_id}.npz"
        if not path.exists():
            raise FileNotFoundError(f"no precomputed features for clip {clip_id}: {path}")
        raw, grid = load_feature_file(path)
        if raw.shape[-1] != self.out_dim:
            raise ValueError(f"feature dim {raw.shape[-1]} != configured {self.out_dim}")
        return raw, grid


def pca_rgb(features: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Top-3 principal components of token features as an RGB image.

    Each component channel is min-max normalized to [0, 1]; a component with
    (near-)zero variance renders as constant gray 0.5, so fully degenerate
    features give an all-gray image.
    """
    rows, cols = grid
    n, d = features.shape
    if n < 3:
        raise ValueError("pca_rgb needs at least 3 tokens")
    if rows * cols != n:
        raise ValueError(f"grid {grid} inconsistent with {n} tokens")
    centered = features.astype(np.float64) - features.mean(axis=0, dtype=np.float64)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    image = np.full((n, 3), 0.5)
    scale = max(float(s[0]), 1.0)
    for c in range(min(3, s.size)):
        if s[c] <= 1e-9 * scale:
            continue
        comp = vt[c]
        # deterministic sign: orient so the largest-magnitude weight is positive
        if comp[np.argmax(np.abs(comp))] < 0:
            comp = -comp
        scores = centered @ comp
        lo, hi = scores.min(), scores.max()
        if hi - lo <= 1e-12 * scale:
            continue
        image[:, c] = (scores - lo) / (hi - lo)
    return image.reshape(rows, cols, 3)
