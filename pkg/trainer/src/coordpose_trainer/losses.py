"""Torch ports of the reconstruction, symmetry-aware, and error-map losses.

Formulas mirror the coordpose package exactly (channel-sum L1 per pixel,
object pixels weighted beta, per-image min over the symmetry pool, squared
error against the clipped true error). Parity is enforced by tests against
the numpy implementations. Tensors are channels-first (b, c, h, w).
"""

from __future__ import annotations

import numpy as np
import torch


def _box_tensors(box, dtype, device):
    # np.array copies: the box arrays are write-locked, which torch rejects
    lo = torch.as_tensor(np.array(box.min_corner), dtype=dtype, device=device)
    ext = torch.as_tensor(np.array(box.extent), dtype=dtype, device=device)
    return lo.view(1, 3, 1, 1), ext.view(1, 3, 1, 1)


def pixel_l1(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """(b,3,h,w) pair -> (b,h,w) per-pixel channel-sum distance."""
    return (pred - target).abs().sum(dim=1)


def recon_loss(pred, target, mask, beta: float) -> torch.Tensor:
    """Per-image masked-weighted mean L1, averaged over the batch."""
    l1 = pixel_l1(pred, target)
    m = mask.to(l1.dtype)
    n = l1.shape[-1] * l1.shape[-2]
    per_image = (beta * (l1 * m).sum(dim=(-2, -1)) + (l1 * (1 - m)).sum(dim=(-2, -1))) / n
    return per_image.mean()


def recolor(target: torch.Tensor, mask: torch.Tensor, rotation, box) -> torch.Tensor:
    """Rewrite masked coordinates as if the object were rotated in its own
    frame; unmasked pixels are copied verbatim."""
    lo, ext = _box_tensors(box, target.dtype, target.device)
    r = torch.as_tensor(np.array(rotation), dtype=target.dtype, device=target.device)
    pts = lo + target * ext
    rotated = torch.einsum("ij,bjhw->bihw", r, pts)
    renorm = ((rotated - lo) / ext).clamp(0.0, 1.0)
    # any truthy mask dtype is accepted, matching the numpy reference
    return torch.where(mask.unsqueeze(1).bool(), renorm, target)


def transformer_loss(pred, target, mask, beta: float, rotations, box):
    """Min over the symmetry pool of the reconstruction loss, per image.

    Returns (batch-mean loss, (b,) argmin pool indices, the per-image best
    recolored targets) so callers can supervise the error head against the
    target that was actually matched.
    """
    candidates = []
    m = mask.to(pred.dtype)
    n = pred.shape[-1] * pred.shape[-2]
    per_image = []
    for rotation in rotations:
        cand = recolor(target, mask, rotation, box)
        candidates.append(cand)
        l1 = pixel_l1(pred, cand)
        per_image.append(
            (beta * (l1 * m).sum(dim=(-2, -1)) + (l1 * (1 - m)).sum(dim=(-2, -1))) / n
        )
    stacked = torch.stack(per_image)  # (pool, b)
    best, idx = stacked.min(dim=0)
    all_cands = torch.stack(candidates)  # (pool, b, 3, h, w)
    gather = idx.view(1, -1, 1, 1, 1).expand(1, *all_cands.shape[1:])
    selected = all_cands.gather(0, gather).squeeze(0)
    return best.mean(), idx, selected


def error_pred_loss(err_pred, pred, target) -> torch.Tensor:
    """Mean squared gap between the predicted error map and the true
    channel-sum L1 error clipped at 1."""
    true_err = pixel_l1(pred, target).clamp(max=1.0)
    e = err_pred.squeeze(1) if err_pred.dim() == 4 else err_pred
    per_image = ((e - true_err) ** 2).sum(dim=(-2, -1)) / true_err.shape[-1] / true_err.shape[-2]
    return per_image.mean()


def critic_loss(real_logits, fake_logits) -> torch.Tensor:
    """Binary cross-entropy pushing real coordinate images to 1, generated
    ones to 0 (minimizing this maximizes log D(real) + log(1 - D(fake)))."""
    ones = torch.ones_like(real_logits)
    zeros = torch.zeros_like(fake_logits)
    bce = torch.nn.functional.binary_cross_entropy_with_logits
    return bce(real_logits, ones) + bce(fake_logits, zeros)


def generator_gan_loss(fake_logits) -> torch.Tensor:
    """Non-saturating generator term -log D(fake)."""
    ones = torch.ones_like(fake_logits)
    return torch.nn.functional.binary_cross_entropy_with_logits(fake_logits, ones)
