"""Training objectives: feature reconstruction and temporal slot contrast.

The contrastive term treats each slot's next-frame version as its positive
and every other slot (within the video, or across the whole batch) as a
negative. It is computed as row-wise softmax cross-entropy between a cosine
similarity matrix of consecutive-frame slots and the identity target; the
positive pair sits in the denominator. An alternative variant that drops the
positive from the denominator is available via ``exclude_positive``.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar losses plus their per-frame contributions.

    ``rec_terms[t]`` and ``contrast_terms[t]`` are the contributions of frame
    t (and of the consecutive pair ending at frame t+1) such that
    total = sum(rec_terms) + alpha * sum(contrast_terms).
    """

    total: torch.Tensor
    rec: torch.Tensor
    contrast: torch.Tensor
    rec_terms: tuple
    contrast_terms: tuple


def _unit_rows(slots: torch.Tensor) -> torch.Tensor:
    norms = torch.linalg.vector_norm(slots, dim=-1, keepdim=True)
    if (norms == 0).any():
        raise ValueError("zero-norm slot vector: slots are degenerate")
    return slots / norms


def similarity_matrix(slots_prev: torch.Tensor, slots_cur: torch.Tensor) -> torch.Tensor:
    """Cosine similarities between slots of consecutive frames.

    slots_prev, slots_cur: [K, D] (or batched [..., K, D]). Entry (i, j) is
    the cosine similarity between slot i at the earlier frame and slot j at
    the later frame.
    """
    return _unit_rows(slots_prev) @ _unit_rows(slots_cur).transpose(-1, -2)


def batch_similarity_matrix(slots: torch.Tensor) -> torch.Tensor:
    """Similarity matrices across the full batch.

    slots: [B, T, K, D]. Returns [T-1, K*B, K*B]; for step t, rows index all
    B*K slots at frame t-1 and columns all B*K slots at frame t, ordered
    video-major (row b*K + k is slot k of video b).
    """
    b, t, k, d = slots.shape
    if t < 2:
        raise ValueError("batch_similarity_matrix needs at least 2 frames")
    flat = slots.transpose(0, 1).reshape(t, b * k, d)
    return similarity_matrix(flat[:-1], flat[1:])


def contrastive_loss(
    sim: torch.Tensor, temperature: float, exclude_positive: bool = False
) -> torch.Tensor:
    """Cross-entropy between row-softmaxed similarities and the identity.

    sim: [T-1, M, M] stacked similarity matrices. Per step, the loss is the
    mean over rows of -log softmax(row / temperature)[diagonal]; steps are
    averaged. With M = K*B the row mean realizes the 1/(B*K) normalizer of
    the batch loss; with M = K it is the intra-video loss.

    ``exclude_positive`` drops the diagonal term from the denominator (the
    main-text formulation); the default keeps it (standard InfoNCE).
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if sim.ndim == 2:
        sim = sim.unsqueeze(0)
    scaled = sim / temperature
    diag = torch.diagonal(scaled, dim1=-2, dim2=-1)
    if exclude_positive:
        masked = scaled.clone()
        eye = torch.eye(sim.shape[-1], dtype=torch.bool, device=sim.device)
        masked[..., eye] = float("-inf")
        denom = torch.logsumexp(masked, dim=-1)
    else:
        denom = torch.logsumexp(scaled, dim=-1)
    return (denom - diag).mean()


def reconstruction_loss(target: torch.Tensor, recon: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all feature elements, averaged over frames."""
    if target.shape != recon.shape:
        raise ValueError(f"shape mismatch: target {tuple(target.shape)} vs recon {tuple(recon.shape)}")
    return ((target - recon) ** 2).mean()


def total_loss(
    target: torch.Tensor,
    recon: torch.Tensor,
    slots: torch.Tensor,
    alpha: float,
    temperature: float,
    mode: str = "batch",
    exclude_positive: bool = False,
) -> LossBreakdown:
    """Combined objective: reconstruction plus weighted slot contrast.

    target, recon: [B, T, N, D_feat]; slots: [B, T, K, D_slot]. All frames
    are reconstructed; all consecutive frame pairs are contrasted. mode
    "batch" contrasts slots across the whole batch, "intra" restricts
    negatives to the same video (the two coincide at B = 1).
    """
    if mode not in ("batch", "intra"):
        raise ValueError(f"unknown contrast mode: {mode}")
    b, t = slots.shape[:2]
    if t < 2:
        raise ValueError("total_loss needs at least 2 frames")

    frame_mse = ((target - recon) ** 2).reshape(b, t, -1).mean(dim=(0, 2))
    rec_terms = frame_mse / t
    rec = rec_terms.sum()

    if mode == "batch":
        sim = batch_similarity_matrix(slots)
        step_ce = torch.stack(
            [contrastive_loss(sim[i], temperature, exclude_positive) for i in range(t - 1)]
        )
    else:
        per_video = torch.stack(
            [
                torch.stack(
                    [
                        contrastive_loss(
                            similarity_matrix(slots[j, i], slots[j, i + 1]),
                            temperature,
                            exclude_positive,
                        )
                        for j in range(b)
                    ]
                ).mean()
                for i in range(t - 1)
            ]
        )
        step_ce = per_video
    contrast_terms = step_ce / (t - 1)
    contrast = contrast_terms.sum()

    total = rec + alpha * contrast
    return LossBreakdown(
        total=total,
        rec=rec,
        contrast=contrast,
        rec_terms=tuple(rec_terms.detach().unbind()),
        contrast_terms=tuple(contrast_terms.detach().unbind()),
    )
