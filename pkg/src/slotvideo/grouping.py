"""Recurrent slot attention: first-frame initialization, grouping, prediction.

Per frame, the grouping module runs iterative slot attention over the
adapted token features: attention logits are scaled dot products of slot
queries and token keys, softmaxed over the slot axis (slots compete for
tokens), renormalized over tokens into a weighted mean of values, and fed
through a gated recurrent update plus a residual MLP. Frame 0 starts from an
initialization strategy; frame t starts from the predictor's output for
frame t-1. The predictor is a transformer block over the slot set with no
positional encoding (slots are unordered).
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


class SlotInit(nn.Module):
    """First-frame slot initialization: learned, random, or k-means.

    learned: a fixed trainable matrix broadcast to every batch element.
    random: per-slot samples from one shared Gaussian with trainable mean
        and log-variance.
    kmeans: centroids of k-means over the first frame's adapted tokens
        (fixed iteration count, empty clusters reseeded to the farthest
        token; deterministic given the generator).
    """

    def __init__(
        self,
        kind: str,
        num_slots: int,
        slot_dim: int,
        kmeans_iters: int = 10,
        kmeans_restarts: int = 1,
    ):
        super().__init__()
        if kind not in ("learned", "random", "kmeans"):
            raise ValueError(f"unknown init strategy: {kind}")
        self.kind = kind
        self.num_slots = num_slots
        self.slot_dim = slot_dim
        self.kmeans_iters = kmeans_iters
        self.kmeans_restarts = kmeans_restarts
        if kind == "learned":
            self.slots = nn.Parameter(torch.randn(num_slots, slot_dim) * 0.5)
        elif kind == "random":
            self.mean = nn.Parameter(torch.zeros(slot_dim))
            self.log_sigma = nn.Parameter(torch.zeros(slot_dim))

    def forward(
        self,
        batch_size: int,
        first_frame_features: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        if self.kind == "learned":
            return self.slots.unsqueeze(0).expand(batch_size, -1, -1)
        if self.kind == "random":
            noise = torch.empty(
                batch_size, self.num_slots, self.slot_dim,
                dtype=self.mean.dtype, device=self.mean.device,
            ).normal_(generator=generator)
            return self.mean + self.log_sigma.exp() * noise
        if first_frame_features is None:
            raise ValueError("kmeans init requires first-frame features")
        return _batch_kmeans(
            first_frame_features, self.num_slots, self.kmeans_iters, self.kmeans_restarts, generator
        )


def _kmeans_single(tokens: torch.Tensor, k: int, iters: int, generator) -> tuple[torch.Tensor, torch.Tensor]:
    n = tokens.shape[0]
    if k > n:
        raise ValueError(f"kmeans needs at least as many tokens ({n}) as slots ({k})")
    idx = torch.randperm(n, generator=generator, device=tokens.device)[:k]
    centroids = tokens[idx].clone()
    for _ in range(iters):
        dists = torch.cdist(tokens, centroids)
        assign = dists.argmin(dim=1)  # ties break to the lowest centroid index
        for c in range(k):
            members = tokens[assign == c]
            if members.shape[0] == 0:
                # reseed empty cluster to the token farthest from its centroid
                farthest = dists.gather(1, assign.unsqueeze(1)).squeeze(1).argmax()
                centroids[c] = tokens[farthest]
                assign = torch.cdist(tokens, centroids).argmin(dim=1)
            else:
                centroids[c] = members.mean(dim=0)
    inertia = (tokens - centroids[torch.cdist(tokens, centroids).argmin(dim=1)]).pow(2).sum()
    return centroids, inertia


def _batch_kmeans(features: torch.Tensor, k: int, iters: int, restarts: int, generator) -> torch.Tensor:
    out = []
    for b in range(features.shape[0]):
        best, best_inertia = None, None
        for _ in range(max(1, restarts)):
            centroids, inertia = _kmeans_single(features[b], k, iters, generator)
            if best_inertia is None or inertia < best_inertia:
                best, best_inertia = centroids, inertia
        out.append(best)
    return torch.stack(out)


class SlotAttention(nn.Module):
    """Iterative attention where slots compete for tokens.

    forward(features [B, N, D_in], slots [B, K, D_slot], iters) returns the
    updated slots and the last iteration's attention [B, K, N], which sums
    to 1 over slots for every token.
    """

    EPS = 1e-8

    def __init__(self, in_dim: int, slot_dim: int, mlp_hidden: int | None = None):
        super().__init__()
        mlp_hidden = mlp_hidden or slot_dim
        self.slot_dim = slot_dim
        self.scale = slot_dim**-0.5
        self.norm_input = nn.LayerNorm(in_dim)
        self.norm_slots = nn.LayerNorm(slot_dim)
        self.norm_mlp = nn.LayerNorm(slot_dim)
        self.to_q = nn.Linear(slot_dim, slot_dim, bias=False)
        self.to_k = nn.Linear(in_dim, slot_dim, bias=False)
        self.to_v = nn.Linear(in_dim, slot_dim, bias=False)
        self.gru = nn.GRUCell(slot_dim, slot_dim)
        self.mlp = nn.Sequential(
            nn.Linear(slot_dim, mlp_hidden), nn.ReLU(), nn.Linear(mlp_hidden, slot_dim)
        )

    def forward(
        self, features: torch.Tensor, slots: torch.Tensor, iters: int
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if iters < 1:
            raise ValueError("iters must be >= 1")
        if torch.isnan(features).any() or torch.isnan(slots).any():
            raise ValueError("NaN in slot attention inputs")
        b, _, _ = features.shape
        k = slots.shape[1]
        h = self.norm_input(features)
        keys, values = self.to_k(h), self.to_v(h)
        attn = None
        for _ in range(iters):
            slots_prev = slots
            q = self.to_q(self.norm_slots(slots)) * self.scale
            logits = q @ keys.transpose(1, 2)  # [B, K, N]
            attn = logits.softmax(dim=1)  # competition over slots, per token
            weights = attn / (attn.sum(dim=2, keepdim=True) + self.EPS)
            updates = weights @ values
            slots = self.gru(
                updates.reshape(-1, self.slot_dim), slots_prev.reshape(-1, self.slot_dim)
            ).reshape(b, k, self.slot_dim)
            slots = slots + self.mlp(self.norm_mlp(slots))
        return slots, attn


class SlotPredictor(nn.Module):
    """Transformer block(s) over the slot set modeling slot interactions.

    Pre-norm residual blocks without positional encoding, so the module is
    equivariant to slot permutations.
    """

    def __init__(self, slot_dim: int, num_layers: int = 1, num_heads: int = 4, ff_mult: int = 4):
        super().__init__()
        self.layers = nn.ModuleList()
        for _ in range(num_layers):
            block = nn.ModuleDict(
                {
                    "norm1": nn.LayerNorm(slot_dim),
                    "attn": nn.MultiheadAttention(slot_dim, num_heads, batch_first=True),
                    "norm2": nn.LayerNorm(slot_dim),
                    "mlp": nn.Sequential(
                        nn.Linear(slot_dim, ff_mult * slot_dim),
                        nn.GELU(),
                        nn.Linear(ff_mult * slot_dim, slot_dim),
                    ),
                }
            )
            self.layers.append(block)

    def forward(self, slots: torch.Tensor) -> torch.Tensor:
        x = slots
        for block in self.layers:
            y = block["norm1"](x)
            x = x + block["attn"](y, y, y, need_weights=False)[0]
            x = x + block["mlp"](block["norm2"](x))
        return x


@dataclass(frozen=True)
class SlotRollout:
    """Slot tensors produced by a recurrent run over a frame sequence."""

    corrected: torch.Tensor  # [B, T, K, D_slot]
    predicted: torch.Tensor  # [B, T, K, D_slot]
    attention: torch.Tensor  # [B, T, K, N]
    init: torch.Tensor  # [B, K, D_slot]


def run_sequence(
    features: torch.Tensor,
    slot_attention: SlotAttention,
    predictor: SlotPredictor,
    init: SlotInit,
    iters_first: int,
    iters_other: int,
    initial_slots: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> SlotRollout:
    """Run grouping over [B, T, N, D] features frame by frame.

    Frame 0 starts from the init strategy with the first-frame iteration
    count; each later frame starts from the previous frame's predicted slots
    with the other-frames count. Passing initial_slots continues a run from
    stored predicted slots instead (every frame then uses iters_other).
    """
    b, t = features.shape[:2]
    if initial_slots is None:
        slots_in = init(b, first_frame_features=features[:, 0], generator=generator)
        iter_counts = [iters_first] + [iters_other] * (t - 1)
    else:
        slots_in = initial_slots
        iter_counts = [iters_other] * t
    start = slots_in

    corrected, predicted, attention = [], [], []
    for i in range(t):
        slots_c, attn = slot_attention(features[:, i], slots_in, iter_counts[i])
        slots_p = predictor(slots_c)
        corrected.append(slots_c)
        predicted.append(slots_p)
        attention.append(attn)
        slots_in = slots_p
    return SlotRollout(
        corrected=torch.stack(corrected, dim=1),
        predicted=torch.stack(predicted, dim=1),
        attention=torch.stack(attention, dim=1),
        init=start,
    )
