"""Latent object dynamics: autoregressive slot prediction from burn-in frames.

The forecaster consumes slot sequences exported by a frozen grouping model
(a "slot bank"), projects slots into a latent width, adds a temporal
positional embedding shared by all slots of a frame, and applies a
transformer encoder over all context slot tokens. The last frame's K output
tokens are projected back to slot space as the next frame's slots; rollout
appends each prediction to a sliding context of at most burn-in length.
Training minimizes MSE between rolled-out and bank slots; the grouping
model itself is never touched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
import torch
import yaml
from torch import nn

from .container import load_arrays, save_arrays


@dataclass(frozen=True)
class DynamicsConfig:
    """Forecaster architecture and optimization settings."""

    burn_in: int = 4
    rollout: int = 4
    latent_dim: int = 128
    ffn_dim: int = 512
    layers: int = 1
    heads: int = 4
    dropout: float = 0.2
    peak_lr: float = 2e-4
    steps: int = 5000
    batch_size: int = 32
    residual: bool = False  # predict deltas on top of the last frame
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 1 or self.rollout < 1:
            raise ValueError("burn_in and rollout must be >= 1")


def load_dynamics_config(path) -> DynamicsConfig:
    with open(path) as fh:
        flat = yaml.safe_load(fh) or {}
    known = {f.name for f in fields(DynamicsConfig)}
    unknown = set(flat) - known
    if unknown:
        raise ValueError(f"unknown dynamics config keys: {sorted(unknown)}")
    return DynamicsConfig(**flat)


def save_dynamics_config(path, cfg: DynamicsConfig) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump({f.name: getattr(cfg, f.name) for f in fields(cfg)}, fh, sort_keys=True)


@dataclass
class SlotBank:
    """Per-clip slot sequences inferred by one grouping checkpoint."""

    slots: dict[str, np.ndarray]  # clip_id -> [T, K, D_slot]
    checkpoint_hash: str

    def __post_init__(self):
        shapes = {v.shape[1:] for v in self.slots.values()}
        if len(shapes) > 1:
            raise ValueError(f"bank clips disagree on (K, D_slot): {sorted(shapes)}")

    @property
    def clip_ids(self) -> list[str]:
        return sorted(self.slots)

    @property
    def slot_shape(self) -> tuple[int, int]:
        first = next(iter(self.slots.values()))
        return first.shape[1], first.shape[2]


def save_bank(path, bank: SlotBank) -> None:
    arrays = {f"slots/{cid}": bank.slots[cid] for cid in bank.clip_ids}
    save_arrays(
        path,
        arrays,
        meta={
            "kind": "slot_bank",
            "version": 1,
            "checkpoint_hash": bank.checkpoint_hash,
            "clip_ids": bank.clip_ids,
        },
    )


def load_bank(path) -> SlotBank:
    arrays, meta = load_arrays(path)
    slots = {name[len("slots/") :]: arr for name, arr in arrays.items() if name.startswith("slots/")}
    return SlotBank(slots=slots, checkpoint_hash=meta["checkpoint_hash"])


class SlotDynamicsModel(nn.Module):
    """Transformer forecaster over sliding windows of slot frames."""

    def __init__(self, slot_dim: int, num_slots: int, cfg: DynamicsConfig):
        super().__init__()
        self.cfg = cfg
        self.num_slots = num_slots
        self.in_proj = nn.Linear(slot_dim, cfg.latent_dim)
        self.out_proj = nn.Linear(cfg.latent_dim, slot_dim)
        self.time_embed = nn.Parameter(torch.randn(cfg.burn_in, cfg.latent_dim) * 0.02)
        self.blocks = nn.ModuleList()
        for _ in range(cfg.layers):
            self.blocks.append(
                nn.ModuleDict(
                    {
                        "norm1": nn.LayerNorm(cfg.latent_dim),
                        "attn": nn.MultiheadAttention(
                            cfg.latent_dim, cfg.heads, dropout=cfg.dropout, batch_first=True
                        ),
                        "norm2": nn.LayerNorm(cfg.latent_dim),
                        "mlp": nn.Sequential(
                            nn.Linear(cfg.latent_dim, cfg.ffn_dim),
                            nn.GELU(),
                            nn.Dropout(cfg.dropout),
                            nn.Linear(cfg.ffn_dim, cfg.latent_dim),
                        ),
                        "drop": nn.Dropout(cfg.dropout),
                    }
                )
            )

    def step(self, context: torch.Tensor) -> torch.Tensor:
        """Predict the next frame's slots from context [B, F, K, D_slot], F <= burn_in."""
        b, f, k, _ = context.shape
        if f > self.cfg.burn_in:
            raise ValueError(f"context of {f} frames exceeds burn_in {self.cfg.burn_in}")
        x = self.in_proj(context)
        # most recent frame aligns with the last embedding slot
        x = x + self.time_embed[self.cfg.burn_in - f :].unsqueeze(1)
        x = x.reshape(b, f * k, -1)
        for block in self.blocks:
            y = block["norm1"](x)
            x = x + block["drop"](block["attn"](y, y, y, need_weights=False)[0])
            x = x + block["mlp"](block["norm2"](x))
        nxt = self.out_proj(x[:, -k:])
        if self.cfg.residual:
            nxt = nxt + context[:, -1]
        return nxt

    def rollout(self, burnin_slots: torch.Tensor, steps: int) -> torch.Tensor:
        """Autoregressive prediction: [B, T_b, K, D] -> [B, steps, K, D]."""
        context = burnin_slots
        preds = []
        for _ in range(steps):
            nxt = self.step(context[:, -self.cfg.burn_in :])
            preds.append(nxt)
            context = torch.cat([context, nxt.unsqueeze(1)], dim=1)
        return torch.stack(preds, dim=1)


@dataclass
class DynamicsRunLog:
    loss: list[float] = field(default_factory=list)

    def to_dict(self):
        return {"loss": list(self.loss)}


def _bank_windows(bank: SlotBank, window: int) -> list[tuple[str, int]]:
    pairs = []
    for cid in bank.clip_ids:
        t = bank.slots[cid].shape[0]
        if t < window:
            raise ValueError(
                f"clip {cid} has {t} frames, shorter than burn_in + rollout = {window}"
            )
        pairs.extend((cid, s) for s in range(t - window + 1))
    return pairs


def rollout_mse(model: SlotDynamicsModel, windows: torch.Tensor, rollout_steps: int) -> torch.Tensor:
    """MSE between autoregressive rollout and bank slots for [B, T_b+K_r, K, D] windows."""
    burn = windows[:, : model.cfg.burn_in]
    target = windows[:, model.cfg.burn_in : model.cfg.burn_in + rollout_steps]
    pred = model.rollout(burn, rollout_steps)
    return ((pred - target) ** 2).mean()


def train_dynamics(
    bank: SlotBank, cfg: DynamicsConfig
) -> tuple[SlotDynamicsModel, DynamicsRunLog]:
    """Fit the forecaster on a slot bank with Adam at a constant rate."""
    if not bank.slots:
        raise ValueError("empty slot bank")
    k, d = bank.slot_shape
    window = cfg.burn_in + cfg.rollout
    pairs = _bank_windows(bank, window)

    torch.manual_seed(cfg.seed)
    model = SlotDynamicsModel(d, k, cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.peak_lr)
    rng = np.random.default_rng(cfg.seed)
    log = DynamicsRunLog()

    model.train()
    dtype = next(model.parameters()).dtype
    tensors = {cid: torch.as_tensor(arr, dtype=dtype) for cid, arr in bank.slots.items()}
    for _ in range(cfg.steps):
        picks = rng.integers(0, len(pairs), size=min(cfg.batch_size, len(pairs)))
        batch = torch.stack([tensors[pairs[i][0]][pairs[i][1] : pairs[i][1] + window] for i in picks])
        loss = rollout_mse(model, batch, cfg.rollout)
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite dynamics loss at step {len(log.loss)}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.loss.append(float(loss.detach()))
    model.eval()
    return model, log
