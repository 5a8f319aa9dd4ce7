"""PNG encodings shared by the pipeline.

Fixed-point layouts:
  - coordinate and error images: 16-bit, value = round(v * 65535) for v in [0,1]
  - depth images: 16-bit, 0.1 mm units (value = round(depth_mm * 10)), 0 = no depth
  - color images: 8-bit RGB
Files are written atomically (temp file + rename) so partially written images
never appear under the final name.
"""

from __future__ import annotations

import os

import cv2
import numpy as np

from .exceptions import FormatError, InputError

COORD_SCALE = 65535.0
DEPTH_UNITS_PER_MM = 10.0


def _imwrite_atomic(path, array: np.ndarray) -> None:
    path = os.fspath(path)
    ok, data = cv2.imencode(".png", array)
    if not ok:
        raise FormatError(f"failed to encode {path}")
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data.tobytes())
    os.replace(tmp, path)


def _imread(path, flags) -> np.ndarray:
    img = cv2.imread(os.fspath(path), flags)
    if img is None:
        raise FormatError(f"failed to read image {path}")
    return img


def save_coord_png(path, coord: np.ndarray) -> None:
    """Write an (H,W,3) coordinate image with components in [0,1]."""
    c = np.asarray(coord, dtype=np.float64)
    if c.ndim != 3 or c.shape[2] != 3:
        raise InputError("coordinate image must be (H,W,3)")
    if c.min() < -1e-9 or c.max() > 1 + 1e-9:
        raise InputError("coordinate components must lie in [0,1]")
    u16 = np.round(np.clip(c, 0.0, 1.0) * COORD_SCALE).astype(np.uint16)
    _imwrite_atomic(path, u16[:, :, ::-1])  # RGB -> BGR for the encoder


def load_coord_png(path) -> np.ndarray:
    img = _imread(path, cv2.IMREAD_UNCHANGED)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint16:
        raise FormatError(f"{path} is not a 16-bit 3-channel coordinate image")
    return img[:, :, ::-1].astype(np.float64) / COORD_SCALE


def save_error_png(path, err: np.ndarray) -> None:
    """Write an (H,W) per-pixel error image with values in [0,1]."""
    e = np.asarray(err, dtype=np.float64)
    if e.ndim != 2:
        raise InputError("error image must be (H,W)")
    if e.min() < -1e-9 or e.max() > 1 + 1e-9:
        raise InputError("error values must lie in [0,1]")
    _imwrite_atomic(path, np.round(np.clip(e, 0.0, 1.0) * COORD_SCALE).astype(np.uint16))


def load_error_png(path) -> np.ndarray:
    img = _imread(path, cv2.IMREAD_UNCHANGED)
    if img.ndim != 2 or img.dtype != np.uint16:
        raise FormatError(f"{path} is not a 16-bit single-channel error image")
    return img.astype(np.float64) / COORD_SCALE


def save_depth_png(path, depth_mm: np.ndarray) -> None:
    """Write an (H,W) depth image in 0.1 mm units; zeros mean no measurement."""
    d = np.asarray(depth_mm, dtype=np.float64)
    if d.ndim != 2:
        raise InputError("depth image must be (H,W)")
    units = np.round(d * DEPTH_UNITS_PER_MM)
    if units.min() < 0 or units.max() > 65535:
        raise InputError("depth out of range for 16-bit storage")
    _imwrite_atomic(path, units.astype(np.uint16))


def load_depth_png(path) -> np.ndarray:
    img = _imread(path, cv2.IMREAD_UNCHANGED)
    if img.ndim != 2 or img.dtype != np.uint16:
        raise FormatError(f"{path} is not a 16-bit depth image")
    return img.astype(np.float64) / DEPTH_UNITS_PER_MM


def save_rgb_png(path, rgb: np.ndarray) -> None:
    img = np.asarray(rgb)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise InputError("color image must be uint8 (H,W,3)")
    _imwrite_atomic(path, img[:, :, ::-1])


def load_rgb_png(path) -> np.ndarray:
    img = _imread(path, cv2.IMREAD_COLOR)
    return img[:, :, ::-1].copy()


def save_mask_png(path, mask: np.ndarray) -> None:
    """Write a label mask; uint8 values are stored verbatim, bool as 0/255."""
    m = np.asarray(mask)
    if m.dtype == bool:
        m = m.astype(np.uint8) * 255
    if m.ndim != 2 or m.dtype != np.uint8:
        raise InputError("mask must be a 2-d bool or uint8 array")
    _imwrite_atomic(path, m)


def load_mask_png(path) -> np.ndarray:
    img = _imread(path, cv2.IMREAD_UNCHANGED)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise FormatError(f"{path} is not an 8-bit mask image")
    return img
