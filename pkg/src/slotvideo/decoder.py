"""Per-slot broadcast MLP decoder and mask-to-pixel upsampling.

Every slot is broadcast to all N token positions, tagged with a learned
position encoding, and mapped by one shared MLP to per-position features
plus an alpha logit. Softmax over slots turns the alpha logits into mixture
weights; the reconstruction is the mask-weighted sum of per-slot features,
so slots are decoded individually and compete for tokens.
"""
from __future__ import annotations

import numpy as np
import torch
from torch import nn


class BroadcastDecoder(nn.Module):
    """Shared MLP decoding [B, K, D_slot] slots into features and masks."""

    def __init__(
        self,
        slot_dim: int,
        feature_dim: int,
        num_tokens: int,
        hidden: int = 256,
        layers: int = 3,
    ):
        super().__init__()
        if layers < 1:
            raise ValueError("decoder needs at least one layer")
        self.num_tokens = num_tokens
        self.feature_dim = feature_dim
        self.pos_embed = nn.Parameter(torch.randn(num_tokens, slot_dim) * 0.02)
        dims = [slot_dim] + [hidden] * (layers - 1) + [feature_dim + 1]
        net = []
        for i in range(len(dims) - 1):
            net.append(nn.Linear(dims[i], dims[i + 1]))
            if i < len(dims) - 2:
                net.append(nn.ReLU())
        self.mlp = nn.Sequential(*net)

    def forward(self, slots: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (recon [B, N, D_feat], token_masks [B, K, N])."""
        b, k, d = slots.shape
        broadcast = slots.unsqueeze(2) + self.pos_embed  # [B, K, N, D_slot]
        out = self.mlp(broadcast)  # [B, K, N, D_feat + 1]
        per_slot, alpha = out.split([self.feature_dim, 1], dim=-1)
        masks = alpha.squeeze(-1).softmax(dim=1)  # [B, K, N]
        recon = (masks.unsqueeze(-1) * per_slot).sum(dim=1)
        return recon, masks


def masks_to_pixels(token_masks: np.ndarray, grid: tuple[int, int], height: int, width: int) -> np.ndarray:
    """Argmax pixel labels from token masks via nearest-neighbor upsampling.

    token_masks: [T, K, N] with N = rows * cols. Pixel (i, j) reads token
    (floor(i * rows / H), floor(j * cols / W)); the argmax over slots breaks
    ties toward the lowest slot index. Returns int labels [T, H, W].
    """
    rows, cols = grid
    t, k, n = token_masks.shape
    if rows * cols != n:
        raise ValueError(f"grid {grid} inconsistent with {n} tokens")
    row_idx = (np.arange(height) * rows) // height
    col_idx = (np.arange(width) * cols) // width
    per_token = token_masks.reshape(t, k, rows, cols)
    upsampled = per_token[:, :, row_idx][:, :, :, col_idx]  # [T, K, H, W]
    return upsampled.argmax(axis=1).astype(np.int32)
