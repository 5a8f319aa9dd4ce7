"""Training-pair generation: background compositing, color jitter, occlusion
patches, paired in-plane rotation, and the on-disk dataset layout.

The target coordinate image always keeps the full, unoccluded object; only the
RGB input loses pixels to occlusion. That asymmetry is the training signal for
recovering hidden parts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import cv2
import numpy as np

from .exceptions import ConfigurationError, InputError
from .geometry import CameraIntrinsics, Mesh, NormalizationBox, Pose
from .images import save_coord_png, save_mask_png, save_rgb_png
from .render import render, shade_headlight


@dataclass(frozen=True)
class AugmentConfig:
    add_range: tuple = (-15.0, 15.0)  # per-channel additive shift
    contrast_range: tuple = (0.8, 1.3)
    multiply_range: tuple = (0.8, 1.2)
    per_channel_chance: float = 0.3  # chance the multiply factor varies per channel
    blur_sigma_range: tuple = (0.0, 0.5)
    rotation_range: tuple = (-45.0, 45.0)  # degrees
    occlusion_fraction_range: tuple = (0.0, 0.1)
    stage2_mode: bool = False
    batch_size: int = 50

    def __post_init__(self):
        ranges = (
            self.add_range,
            self.contrast_range,
            self.multiply_range,
            self.blur_sigma_range,
            self.rotation_range,
            self.occlusion_fraction_range,
        )
        for lo, hi in ranges:
            if hi < lo:
                raise ConfigurationError("augmentation ranges must be well-ordered")
        lo, hi = self.occlusion_fraction_range
        if lo < 0 or hi > 1:
            raise ConfigurationError("occlusion fractions must lie in [0, 1]")
        if not 0 <= self.per_channel_chance <= 1:
            raise ConfigurationError("per_channel_chance must lie in [0, 1]")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")


def composite(object_rgb, object_mask, background_rgb) -> np.ndarray:
    """Object over background, with the seam softened.

    A 3 px band straddling the mask boundary is Gaussian-blurred (sigma 1);
    pixels further from the boundary are copied bit-exactly.
    """
    obj = np.asarray(object_rgb)
    bg = np.asarray(background_rgb)
    mask = np.asarray(object_mask).astype(bool)
    if obj.shape != bg.shape or mask.shape != obj.shape[:2]:
        raise InputError("object, mask, and background dimensions must match")
    out = np.where(mask[:, :, None], obj, bg)
    m = mask.astype(np.uint8)
    kernel = np.ones((3, 3), dtype=np.uint8)
    band = cv2.dilate(m, kernel) ^ cv2.erode(m, kernel)
    if band.any():
        blurred = cv2.GaussianBlur(out, (0, 0), 1.0)
        out[band.astype(bool)] = blurred[band.astype(bool)]
    return out


def color_jitter(image, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Add, contrast, multiply, blur, in that order, clamped to 8 bits."""
    img = np.asarray(image, dtype=np.float64)
    img = img + rng.uniform(*config.add_range, size=3)
    img = (img - 128.0) * rng.uniform(*config.contrast_range) + 128.0
    if rng.uniform() < config.per_channel_chance:
        img = img * rng.uniform(*config.multiply_range, size=3)
    else:
        img = img * rng.uniform(*config.multiply_range)
    sigma = rng.uniform(*config.blur_sigma_range)
    if sigma > 1e-3:
        img = cv2.GaussianBlur(img, (0, 0), sigma)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def occlude(image, target_coord, mask, fraction: float, rng: np.random.Generator):
    """Drop a contiguous rectangle-shaped patch of object pixels from the RGB
    input. The target is untouched. Returns (image, visible_mask); the caller
    fills the dropped pixels with background via the visible mask.

    The patch is the `round(fraction * |mask|)` mask pixels closest to a random
    center under a rectangle metric with aspect drawn from [0.5, 2], so the
    occluded area matches the request to within one pixel.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InputError("fraction must be in [0, 1]")
    img = np.asarray(image).copy()
    mask = np.asarray(mask).astype(bool)
    visible = mask.copy()
    ys, xs = np.nonzero(mask)
    target = int(round(fraction * len(ys)))
    if target > 0:
        aspect = rng.uniform(0.5, 2.0)
        c = rng.integers(len(ys))
        d = np.maximum(np.abs(xs - xs[c]) / aspect, np.abs(ys - ys[c]))
        hit = np.argsort(d, kind="stable")[:target]
        img[ys[hit], xs[hit]] = 0
        visible[ys[hit], xs[hit]] = False
    return img, visible


def _rotation_matrix(shape, angle_deg: float):
    h, w = shape[:2]
    return cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), angle_deg, 1.0)


def rotate_nn(image, angle_deg: float) -> np.ndarray:
    """In-plane rotation about the crop center with nearest-neighbor sampling."""
    img = np.asarray(image)
    m = _rotation_matrix(img.shape, angle_deg)
    return cv2.warpAffine(
        img,
        m,
        (img.shape[1], img.shape[0]),
        flags=cv2.INTER_NEAREST,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )


def paired_rotation(image, target_coord, mask, angle_deg: float):
    """The same rotation for input and targets: bilinear for RGB, nearest for
    the coordinate image and mask so target values are never invented."""
    img = np.asarray(image)
    m = _rotation_matrix(img.shape, angle_deg)
    rgb = cv2.warpAffine(
        img,
        m,
        (img.shape[1], img.shape[0]),
        flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )
    coord = rotate_nn(target_coord, angle_deg)
    rotated_mask = rotate_nn(np.asarray(mask).astype(np.uint8), angle_deg).astype(bool)
    return rgb, coord, rotated_mask


def make_batch(samples, config: AugmentConfig, seed: int, iteration: int, backgrounds=None):
    """One training mini-batch, fully re-randomized per iteration.

    Even iterations produce stage-1 style inputs (object over background), odd
    iterations stage-2 style (everything outside the visible mask zeroed).
    Per-sample streams are derived from (seed, iteration, slot) so the batch is
    reproducible and order-independent.

    samples: sequence of (rgb, coord, mask) of clean renders on black.
    """
    if len(samples) == 0:
        raise InputError("no samples")
    stage2 = iteration % 2 == 1
    first_rgb = np.asarray(samples[0][0])
    size = first_rgb.shape[0]
    b = config.batch_size
    out_rgb = np.zeros((b, size, size, 3), dtype=np.uint8)
    out_coord = np.zeros((b, size, size, 3), dtype=np.float64)
    out_mask = np.zeros((b, size, size), dtype=bool)
    out_visible = np.zeros((b, size, size), dtype=bool)
    for slot in range(b):
        rng = np.random.default_rng([seed, iteration, slot])
        rgb, coord, mask = samples[rng.integers(len(samples))]
        fraction = rng.uniform(*config.occlusion_fraction_range)
        rgb, visible = occlude(rgb, coord, mask, fraction, rng)
        if stage2:
            rgb = rgb * visible[:, :, None].astype(np.uint8)
        elif backgrounds is not None and len(backgrounds):
            rgb = composite(rgb, visible, backgrounds[rng.integers(len(backgrounds))])
        rgb = color_jitter(rgb, config, rng)
        angle = rng.uniform(*config.rotation_range)
        rgb, coord_r, mask_r = paired_rotation(rgb, coord, mask, angle)
        visible_r = rotate_nn(visible.astype(np.uint8), angle).astype(bool)
        if stage2:
            rgb = rgb * visible_r[:, :, None].astype(np.uint8)
        out_rgb[slot] = rgb
        out_coord[slot] = coord_r
        out_mask[slot] = mask_r
        out_visible[slot] = visible_r
    return {
        "rgb": out_rgb,
        "coord": out_coord,
        "mask": out_mask,
        "visible": out_visible,
        "stage": 2 if stage2 else 1,
    }


def _procedural_background(rng: np.random.Generator, size: int) -> np.ndarray:
    noise = rng.integers(0, 256, size=(size, size, 3)).astype(np.uint8)
    return cv2.GaussianBlur(noise, (0, 0), 8.0)


def _random_training_pose(rng: np.random.Generator, mesh: Mesh, k: CameraIntrinsics) -> Pose:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    # distance chosen so the object spans roughly 70% of the frame
    base_z = k.fx * mesh.diameter / (0.7 * k.width)
    z_cam = base_z * rng.uniform(0.95, 1.2)
    lateral = rng.uniform(-0.02, 0.02, size=2) * z_cam / k.fx * k.width
    return Pose(rotation=rot, translation=(lateral[0], lateral[1], z_cam))


def default_training_intrinsics(size: int = 128) -> CameraIntrinsics:
    f = 1.5 * size
    c = (size - 1) / 2.0
    return CameraIntrinsics(fx=f, fy=f, cx=c, cy=c, width=size, height=size)


def make_training_set(
    out_dir: str,
    mesh: Mesh,
    box: NormalizationBox,
    n_images: int,
    config: AugmentConfig,
    seed: int,
    obj_id: int = 1,
    k: CameraIntrinsics | None = None,
    backgrounds=None,
) -> int:
    """Write `n_images` augmented training pairs.

    Layout: rgb/NNNNNN.png (8-bit input), coord/NNNNNN.png (16-bit target),
    mask/NNNNNN.png (full object mask, occluded parts included),
    visible/NNNNNN.png (mask minus the occlusion patch), meta.jsonl with the
    generating pose, intrinsics, and applied augmentation amounts.
    """
    if n_images < 1:
        raise InputError("n_images must be positive")
    if k is None:
        k = default_training_intrinsics()
    for sub in ("rgb", "coord", "mask", "visible"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    meta_rows = []
    for i in range(n_images):
        rng = np.random.default_rng([seed, i])
        pose = _random_training_pose(rng, mesh, k)
        out = render(mesh, pose, k, box=box)
        rgb = shade_headlight(mesh, pose, k, out)
        fraction = rng.uniform(*config.occlusion_fraction_range)
        rgb, visible = occlude(rgb, out.coord, out.mask, fraction, rng)
        if backgrounds is not None and len(backgrounds):
            bg = backgrounds[rng.integers(len(backgrounds))]
        else:
            bg = _procedural_background(rng, k.width)
        rgb = composite(rgb, visible, bg)
        rgb = color_jitter(rgb, config, rng)
        angle = rng.uniform(*config.rotation_range)
        rgb, coord, mask = paired_rotation(rgb, out.coord, out.mask, angle)
        visible = rotate_nn(visible.astype(np.uint8), angle).astype(bool)
        if config.stage2_mode:
            rgb = rgb * visible[:, :, None].astype(np.uint8)
        name = f"{i:06d}.png"
        save_rgb_png(os.path.join(out_dir, "rgb", name), rgb)
        save_coord_png(os.path.join(out_dir, "coord", name), coord)
        save_mask_png(os.path.join(out_dir, "mask", name), mask)
        save_mask_png(os.path.join(out_dir, "visible", name), visible)
        meta_rows.append(
            {
                "image_id": i,
                "obj_id": int(obj_id),
                "cam_K": [float(v) for v in k.as_matrix().reshape(-1)],
                "R": [float(v) for v in pose.rotation.reshape(-1)],
                "t": [float(v) for v in pose.translation],
                "occlusion_fraction": float(fraction),
                "rotation_deg": float(angle),
            }
        )
    tmp = os.path.join(out_dir, "meta.jsonl.tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for row in meta_rows:
            f.write(json.dumps(row) + "\n")
    os.replace(tmp, os.path.join(out_dir, "meta.jsonl"))
    return n_images


def load_training_set(dir_path: str):
    """Read a dataset back as (samples, meta) where samples are
    (rgb, coord, mask) triples of clean arrays."""
    from .images import load_coord_png, load_mask_png, load_rgb_png

    meta_path = os.path.join(dir_path, "meta.jsonl")
    try:
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = [json.loads(line) for line in f if line.strip()]
    except FileNotFoundError:
        raise InputError(f"not a dataset directory: {dir_path}") from None
    samples = []
    for row in meta:
        name = f"{row['image_id']:06d}.png"
        samples.append(
            (
                load_rgb_png(os.path.join(dir_path, "rgb", name)),
                load_coord_png(os.path.join(dir_path, "coord", name)),
                load_mask_png(os.path.join(dir_path, "mask", name)).astype(bool),
            )
        )
    return samples, meta
