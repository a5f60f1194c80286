"""Composition of encoder, grouping, and decoder into one trainable model."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import ModelConfig
from .decoder import BroadcastDecoder
from .encoder import ConvPatchEncoder, FeatureAdapter, ImportBackbone
from .grouping import SlotAttention, SlotInit, SlotPredictor, SlotRollout, run_sequence

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class ModelOutput:
    """Everything one forward pass over a frame segment produces."""

    raw: torch.Tensor  # [B, T, N, D_feat] backbone features (recon target)
    adapted: torch.Tensor  # [B, T, N, D]
    rollout: SlotRollout
    recon: torch.Tensor  # [B, T, N, D_feat]
    token_masks: torch.Tensor  # [B, T, K, N]


class GroupingModel(nn.Module):
    """Video object discovery model: backbone + adapter + slots + decoder."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.backbone == "conv":
            self.backbone = ConvPatchEncoder(
                image_size=cfg.image_size,
                patch_size=cfg.patch_size,
                widths=cfg.backbone_widths,
                out_dim=cfg.feature_dim,
                frozen=cfg.backbone_frozen,
            )
            self.feature_source = None
        else:
            self.backbone = None
            if not cfg.feature_dir:
                raise ValueError("backbone=import requires feature_dir")
            self.feature_source = ImportBackbone(cfg.feature_dir, cfg.feature_dim)
        hidden = cfg.adapter_hidden or (2 * cfg.feature_dim,)
        self.adapter = FeatureAdapter(
            cfg.feature_dim, cfg.slot_dim, hidden=hidden, activation=cfg.adapter_activation
        )
        self.slot_init = SlotInit(
            cfg.init_strategy,
            cfg.num_slots,
            cfg.slot_dim,
            kmeans_iters=cfg.kmeans_iters,
            kmeans_restarts=cfg.kmeans_restarts,
        )
        self.slot_attention = SlotAttention(
            cfg.slot_dim, cfg.slot_dim, mlp_hidden=cfg.sa_mlp_hidden or cfg.slot_dim
        )
        self.predictor = SlotPredictor(
            cfg.slot_dim, num_layers=cfg.predictor_layers, num_heads=cfg.predictor_heads
        )
        self.decoder = BroadcastDecoder(
            cfg.slot_dim,
            cfg.feature_dim,
            cfg.tokens_per_frame,
            hidden=cfg.decoder_hidden,
            layers=cfg.decoder_layers,
        )
        self.to(_DTYPES[cfg.precision])

    @property
    def dtype(self) -> torch.dtype:
        return self.adapter.mlp[0].weight.dtype

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def extract(self, frames: torch.Tensor, clip_ids=None) -> torch.Tensor:
        """Raw backbone features for [B, T, H, W, C] frames."""
        if self.backbone is not None:
            b, t = frames.shape[:2]
            flat = frames.reshape(b * t, *frames.shape[2:])
            if self.backbone.frozen:
                with torch.no_grad():
                    tokens = self.backbone(flat)
            else:
                tokens = self.backbone(flat)
            return tokens.reshape(b, t, *tokens.shape[1:])
        if clip_ids is None:
            raise ValueError("import backbone needs clip_ids to locate feature files")
        feats = [self.feature_source.features_for(cid) for cid in clip_ids]
        raw = torch.stack([torch.as_tensor(f[0], dtype=self.dtype) for f in feats])
        return raw

    def forward(
        self,
        frames: torch.Tensor,
        clip_ids=None,
        initial_slots: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> ModelOutput:
        cfg = self.cfg
        raw = self.extract(frames, clip_ids=clip_ids)
        adapted = self.adapter(raw)
        rollout = run_sequence(
            adapted,
            self.slot_attention,
            self.predictor,
            self.slot_init,
            cfg.sa_iters_first,
            cfg.sa_iters_other,
            initial_slots=initial_slots,
            generator=generator,
        )
        b, t, k, _ = rollout.corrected.shape
        recon_flat, masks_flat = self.decoder(rollout.corrected.reshape(b * t, k, -1))
        recon = recon_flat.reshape(b, t, *recon_flat.shape[1:])
        token_masks = masks_flat.reshape(b, t, *masks_flat.shape[1:])
        return ModelOutput(
            raw=raw, adapted=adapted, rollout=rollout, recon=recon, token_masks=token_masks
        )

    def decode_slots(self, slots: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Decode [F, K, D_slot] slots to (recon [F, N, D_feat], masks [F, K, N])."""
        return self.decoder(slots)


def parameter_hash(module: nn.Module) -> str:
    """Content hash of a module's parameters and buffers."""
    digest = hashlib.sha256()
    state = module.state_dict()
    for name in sorted(state):
        tensor = state[name].detach().cpu().contiguous()
        digest.update(name.encode())
        digest.update(str(tensor.dtype).encode())
        digest.update(str(tuple(tensor.shape)).encode())
        digest.update(np.ascontiguousarray(tensor.numpy()).tobytes())
    return digest.hexdigest()
