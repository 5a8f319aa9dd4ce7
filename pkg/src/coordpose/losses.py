"""Reconstruction-style losses over coordinate images and the rotation loss scan.

All reductions use fixed numpy summation orders so repeated evaluation of the
same arrays is bit-stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .geometry import (
    CameraIntrinsics,
    Mesh,
    NormalizationBox,
    Pose,
    SymmetryPool,
    apply_symmetry,
    denormalize_coord,
    expand_pool,
    normalize_coord,
    rotation_about_axis,
)
from .render import render


@dataclass(frozen=True)
class LossConfig:
    """Mask weight and task-balance weights used during training."""

    beta: float = 3.0
    lambda1: float = 100.0
    lambda2: float = 50.0

    def __post_init__(self):
        if self.beta < 1:
            raise InputError("beta must be >= 1")
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise InputError("task weights must be positive")


def _check_images(pred: np.ndarray, target: np.ndarray, mask: np.ndarray):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.ndim != 3 or pred.shape[2] != 3:
        raise InputError("coordinate images must be (H,W,3)")
    if pred.shape != target.shape or mask.shape != pred.shape[:2]:
        raise InputError("prediction, target and mask dimensions must match")
    return pred, target, mask


def pixel_l1(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-pixel distance: sum of absolute channel differences."""
    return np.abs(
        np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    ).sum(axis=2)


def recon_loss(pred, target, mask, beta: float = 3.0) -> float:
    """Masked-weighted mean L1: object pixels count beta times, others once."""
    pred, target, mask = _check_images(pred, target, mask)
    l1 = pixel_l1(pred, target)
    n = l1.size
    return float((beta * l1[mask].sum() + l1[~mask].sum()) / n)


def sym_transform_image(target, mask, rotation: np.ndarray, box: NormalizationBox) -> np.ndarray:
    """Recolor masked pixels as if the object were rotated in its own frame.

    Coordinates are denormalized, rotated, renormalized (clamping anything the
    rotation pushed outside the box). Pixels outside the mask are copied
    verbatim, so the background of a rendered target stays zero and the
    identity rotation is a true no-op.
    """
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    out = target.copy()
    if mask.any():
        pts = denormalize_coord(target[mask], box)
        out[mask] = normalize_coord(pts @ np.asarray(rotation, dtype=np.float64).T, box)
    return out


def transformer_loss(
    pred, target, mask, beta: float, pool: SymmetryPool, box: NormalizationBox
) -> tuple[float, int]:
    """Reconstruction loss against the best-matching symmetric recoloring.

    Returns (loss, index of the minimizing pool rotation); ties keep the
    earliest index.
    """
    pred, target, mask = _check_images(pred, target, mask)
    losses = [
        recon_loss(pred, sym_transform_image(target, mask, r, box), mask, beta)
        for r in expand_pool(pool)
    ]
    idx = int(np.argmin(losses))
    return losses[idx], idx


def error_pred_loss(err_pred, pred, target) -> float:
    """Squared distance between the predicted error map and the clipped true error.

    The true per-pixel error is the unweighted L1 reconstruction distance,
    clipped to 1 to match the reachable range of a sigmoid output.
    """
    err_pred = np.asarray(err_pred, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or err_pred.shape != pred.shape[:2]:
        raise InputError("error map and image dimensions must match")
    true_err = np.minimum(pixel_l1(pred, target), 1.0)
    return float(np.square(err_pred - true_err).sum() / err_pred.size)


def gan_objective(d_real: float, d_fake: float) -> float:
    """Discriminator objective log(d_real) + log(1 - d_fake), natural log."""
    if not (0.0 < d_real < 1.0 and 0.0 < d_fake < 1.0):
        raise InputError("discriminator outputs must lie strictly inside (0,1)")
    return float(np.log(d_real) + np.log(1.0 - d_fake))


def loss_scan(
    mesh: Mesh,
    pose_ref: Pose,
    axis: str,
    steps: int,
    k: CameraIntrinsics,
    box: NormalizationBox,
    pool: SymmetryPool,
    mode: str,
    beta: float = 3.0,
) -> list[tuple[float, float]]:
    """Loss as a function of an object-frame rotation offset from a reference pose.

    The target is the render at pose_ref; each step renders the pose rotated
    by angle in [0, 2*pi) about the given axis and scores it:
      - plain_l1: weighted reconstruction loss against the fixed target
      - view_limit: same, but angles >= pi are rendered as angle - pi, the way
        a pose regressor restricted to half the rotation range behaves
      - transformer: symmetry-aware loss over the pool
    Returned angles are always the unmapped scan angles.
    """
    if steps < 2:
        raise InputError("need at least 2 scan steps")
    if mode not in ("plain_l1", "view_limit", "transformer"):
        raise InputError(f"unknown scan mode {mode!r}")
    target = render(mesh, pose_ref, k, box)
    rows = []
    for i in range(steps):
        angle = 2.0 * np.pi * i / steps
        render_angle = angle - np.pi if (mode == "view_limit" and angle >= np.pi) else angle
        pred = render(
            mesh, apply_symmetry(pose_ref, rotation_about_axis(axis, render_angle)), k, box
        )
        if mode == "transformer":
            loss, _ = transformer_loss(pred.coord, target.coord, target.mask, beta, pool, box)
        else:
            loss = recon_loss(pred.coord, target.coord, target.mask, beta)
        rows.append((angle, loss))
    return rows


def write_loss_scan_csv(path, rows) -> None:
    with open(path, "w") as f:
        f.write("angle_rad,loss\n")
        for angle, loss in rows:
            f.write(f"{angle:.12g},{loss:.12g}\n")


def plot_loss_curves(path, curves: dict) -> None:
    """Line plot of one or more (angle, loss) curves to an SVG/PNG file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for label, rows in curves.items():
        angles = [a for a, _ in rows]
        losses = [l for _, l in rows]
        ax.plot(angles, losses, label=label)
    ax.set_xlabel("rotation about axis (rad)")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
