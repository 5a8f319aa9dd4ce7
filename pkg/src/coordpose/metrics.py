"""Pose correctness metrics: vertex distances, the 10%-of-diameter rule,
depth-based visible surface discrepancy, and 2D box overlap."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import ConfigurationError, InputError, UndefinedMetricError
from .geometry import CameraIntrinsics, Mesh, Pose, SymmetryPool
from .render import render


@dataclass(frozen=True)
class VsdParams:
    tau: float = 20.0  # depth misalignment tolerance, mm
    delta: float = 15.0  # visibility tolerance against scene depth, mm
    threshold: float = 0.3  # correctness cutoff on the discrepancy score

    def __post_init__(self):
        if self.tau <= 0 or self.delta <= 0:
            raise ConfigurationError("tau and delta must be positive")
        if not 0 < self.threshold <= 1:
            raise ConfigurationError("threshold must be in (0, 1]")


def add(est: Pose, gt: Pose, mesh: Mesh) -> float:
    """Mean distance between matching vertices under the two poses, in mm."""
    if len(mesh.vertices) == 0:
        raise InputError("mesh has no vertices")
    return float(
        np.linalg.norm(est.transform(mesh.vertices) - gt.transform(mesh.vertices), axis=1).mean()
    )


def adi(est: Pose, gt: Pose, mesh: Mesh) -> float:
    """Mean distance from each vertex under the estimate to the nearest vertex
    under the ground truth; indifferent to symmetric relabelings."""
    if len(mesh.vertices) == 0:
        raise InputError("mesh has no vertices")
    tree = cKDTree(gt.transform(mesh.vertices))
    d, _ = tree.query(est.transform(mesh.vertices), k=1)
    return float(np.mean(d))


def is_correct_add(est: Pose, gt: Pose, mesh: Mesh, pool: SymmetryPool) -> bool:
    """10%-of-diameter correctness; nearest-vertex matching for symmetric objects."""
    metric = add(est, gt, mesh) if pool.is_trivial else adi(est, gt, mesh)
    return metric < 0.1 * mesh.diameter


def vsd(
    est: Pose,
    gt: Pose,
    mesh: Mesh,
    scene_depth: np.ndarray,
    k: CameraIntrinsics,
    params: VsdParams = VsdParams(),
) -> float:
    """Visible surface discrepancy with a step cost.

    A pixel is visible under a pose when the object's rendered depth does not
    exceed the scene depth by more than delta. Over the union of the two
    visibility masks, a pixel costs 0 only when both poses see it and their
    depths agree within tau.
    """
    scene_depth = np.asarray(scene_depth, dtype=np.float64)
    if scene_depth.shape != (k.height, k.width):
        raise InputError("scene depth size does not match the intrinsics")
    d_e = render(mesh, est, k).depth
    d_g = render(mesh, gt, k).depth
    v_e = (d_e > 0) & (d_e <= scene_depth + params.delta)
    v_g = (d_g > 0) & (d_g <= scene_depth + params.delta)
    union = v_e | v_g
    n = int(union.sum())
    if n == 0:
        raise UndefinedMetricError("object invisible under both poses")
    agree = v_e & v_g & (np.abs(d_e - d_g) < params.tau)
    return float((n - int(agree.sum())) / n)


def is_correct_vsd(
    est: Pose,
    gt: Pose,
    mesh: Mesh,
    scene_depth: np.ndarray,
    k: CameraIntrinsics,
    params: VsdParams = VsdParams(),
) -> bool:
    return vsd(est, gt, mesh, scene_depth, k, params) < params.threshold


def iou2d(box_a, box_b) -> float:
    """Intersection over union of two (cx, cy, w, h) boxes."""
    ax0, ay0 = box_a[0] - box_a[2] / 2.0, box_a[1] - box_a[3] / 2.0
    ax1, ay1 = box_a[0] + box_a[2] / 2.0, box_a[1] + box_a[3] / 2.0
    bx0, by0 = box_b[0] - box_b[2] / 2.0, box_b[1] - box_b[3] / 2.0
    bx1, by1 = box_b[0] + box_b[2] / 2.0, box_b[1] + box_b[3] / 2.0
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = box_a[2] * box_a[3] + box_b[2] * box_b[3] - inter
    if union <= 0:
        return 0.0
    return inter / union


def add_threshold_curve(values_mm, thresholds_mm) -> np.ndarray:
    """Fraction of values below each threshold; one point per threshold."""
    values = np.asarray(values_mm, dtype=np.float64)
    if len(values) == 0:
        raise InputError("no metric values")
    return np.array([float((values < t).mean()) for t in thresholds_mm])


def write_recall_csv(path: str, rows) -> None:
    """Per-object recall table: one row per (obj_id, metric) pair.

    rows: iterable of (obj_id, metric_name, recall, n). Written atomically.
    """
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["obj_id", "metric", "recall", "n"])
        for obj_id, metric, recall, n in rows:
            w.writerow([int(obj_id), metric, f"{recall:.6f}", int(n)])
    os.replace(tmp, path)
