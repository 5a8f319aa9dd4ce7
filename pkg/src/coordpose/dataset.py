"""Scene annotations, detection/result files, per-object threshold tables,
and the JSON run configuration."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, FormatError, InputError
from .geometry import (
    CameraIntrinsics,
    Mesh,
    NormalizationBox,
    Pose,
    SymmetryPool,
)
from .pipeline import PipelineConfig
from .render import render

# Stage-1 outlier thresholds tuned per object; benchmark-specific tables.
# Unlisted objects fall back to PipelineConfig.theta_o.
THETA_O_TABLES = {
    "linemod": {
        "ape": 0.1,
        "benchvise": 0.2,
        "cam": 0.2,
        "can": 0.2,
        "cat": 0.2,
        "driller": 0.2,
        "duck": 0.1,
        "eggbox": 0.2,
        "glue": 0.2,
        "holepuncher": 0.2,
        "iron": 0.2,
        "lamp": 0.2,
        "phone": 0.2,
    },
    "linemod_occlusion": {
        "ape": 0.2,
        "can": 0.3,
        "cat": 0.3,
        "driller": 0.3,
        "duck": 0.2,
        "eggbox": 0.2,
        "glue": 0.3,
        "holepuncher": 0.3,
    },
    "tless": {
        1: 0.1, 2: 0.1, 3: 0.1, 4: 0.3, 5: 0.2, 6: 0.3, 7: 0.3, 8: 0.3,
        9: 0.3, 10: 0.2, 11: 0.3, 12: 0.3, 13: 0.2, 14: 0.2, 15: 0.2,
        16: 0.3, 17: 0.3, 18: 0.2, 19: 0.3, 20: 0.3, 21: 0.2, 22: 0.2,
        23: 0.3, 24: 0.1, 25: 0.3, 26: 0.3, 27: 0.3, 28: 0.3, 29: 0.3,
        30: 0.3,
    },
}


def theta_o_for(table_name: str, obj_key, default: float = 0.2) -> float:
    try:
        table = THETA_O_TABLES[table_name]
    except KeyError:
        raise ConfigurationError(f"unknown threshold table {table_name!r}") from None
    return float(table.get(obj_key, default))


def bbox_corner_to_center(b):
    """[x_min, y_min, w, h] -> (cx, cy, w, h)."""
    x, y, w, h = (float(v) for v in b)
    return (x + w / 2.0, y + h / 2.0, w, h)


def bbox_center_to_corner(b):
    cx, cy, w, h = (float(v) for v in b)
    return (cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass(frozen=True)
class ObjectAnnotation:
    obj_id: int
    pose: Pose
    bbox_visib: tuple  # corner-based [x_min, y_min, w, h]

    def __post_init__(self):
        if len(self.bbox_visib) != 4:
            raise FormatError("bbox_visib must have 4 entries")


@dataclass(frozen=True)
class SceneAnnotation:
    image_id: int
    k: CameraIntrinsics
    objects: tuple = field(default_factory=tuple)


def _pose_from_lists(r_flat, t, where: str) -> Pose:
    r = np.asarray(r_flat, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if r.shape != (9,) or t.shape != (3,):
        raise FormatError(f"{where}: R must have 9 entries and t 3")
    r = r.reshape(3, 3)
    # dataset-grade tolerance, looser than Pose's own check
    if np.abs(r @ r.T - np.eye(3)).max() > 1e-4 or abs(np.linalg.det(r) - 1) > 1e-4:
        raise FormatError(f"{where}: R is not a proper rotation")
    u, _, vt = np.linalg.svd(r)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return Pose(rotation=r, translation=t)


def save_scenes(path: str, scenes, image_size=(640, 480)) -> None:
    """Scene ground truth as one JSON object keyed by image id."""
    doc = {}
    for s in scenes:
        doc[str(s.image_id)] = {
            "cam_K": [float(v) for v in s.k.as_matrix().reshape(-1)],
            "objects": [
                {
                    "obj_id": int(o.obj_id),
                    "R": [float(v) for v in o.pose.rotation.reshape(-1)],
                    "t": [float(v) for v in o.pose.translation],
                    "bbox_visib": [float(v) for v in o.bbox_visib],
                }
                for o in s.objects
            ],
        }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump({"image_size": list(image_size), "scenes": doc}, f, indent=1)
    os.replace(tmp, path)


def load_scenes(path: str):
    """Returns (scenes dict keyed by image_id, (width, height))."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise FormatError(f"missing scenes file {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed scenes file {path}: {exc}") from None
    if "scenes" not in doc or "image_size" not in doc:
        raise FormatError(f"{path}: expected 'image_size' and 'scenes' keys")
    width, height = (int(v) for v in doc["image_size"])
    out = {}
    for key, entry in doc["scenes"].items():
        image_id = int(key)
        cam_k = np.asarray(entry.get("cam_K", ()), dtype=np.float64)
        if cam_k.shape != (9,):
            raise FormatError(f"{path}: image {key} cam_K must have 9 entries")
        k = CameraIntrinsics(
            fx=cam_k[0], fy=cam_k[4], cx=cam_k[2], cy=cam_k[5],
            width=width, height=height,
        )
        objects = []
        for i, o in enumerate(entry.get("objects", ())):
            where = f"{path}: image {key} object {i}"
            for req in ("obj_id", "R", "t", "bbox_visib"):
                if req not in o:
                    raise FormatError(f"{where} lacks '{req}'")
            objects.append(
                ObjectAnnotation(
                    obj_id=int(o["obj_id"]),
                    pose=_pose_from_lists(o["R"], o["t"], where),
                    bbox_visib=tuple(float(v) for v in o["bbox_visib"]),
                )
            )
        out[image_id] = SceneAnnotation(image_id=image_id, k=k, objects=tuple(objects))
    return out, (width, height)


def save_detections(path: str, rows) -> None:
    """JSONL, one detection per line: image_id, obj_id, corner-based bbox."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(
                json.dumps(
                    {
                        "image_id": int(r["image_id"]),
                        "obj_id": int(r["obj_id"]),
                        "bbox": [float(v) for v in r["bbox"]],
                    }
                )
                + "\n"
            )
    os.replace(tmp, path)


def load_detections(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [line for line in f if line.strip()]
    except FileNotFoundError:
        raise FormatError(f"missing detections file {path}") from None
    rows = []
    for n, line in enumerate(lines, 1):
        try:
            r = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{n}: {exc}") from None
        for req in ("image_id", "obj_id", "bbox"):
            if req not in r:
                raise FormatError(f"{path}:{n}: lacks '{req}'")
        if len(r["bbox"]) != 4:
            raise FormatError(f"{path}:{n}: bbox must have 4 entries")
        rows.append(r)
    return rows


def detections_from_scenes(scenes) -> list:
    """Ground-truth boxes repackaged as detector output, for synthetic runs."""
    rows = []
    for image_id in sorted(scenes):
        for o in scenes[image_id].objects:
            rows.append(
                {"image_id": image_id, "obj_id": o.obj_id, "bbox": list(o.bbox_visib)}
            )
    return rows


def save_results(path: str, rows) -> None:
    """Pose results as JSONL ordered by (image_id, obj_id)."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        for r in sorted(rows, key=lambda r: (r["image_id"], r["obj_id"])):
            f.write(json.dumps(r) + "\n")
    os.replace(tmp, path)


def load_results(path: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [line for line in f if line.strip()]
    except FileNotFoundError:
        raise FormatError(f"missing results file {path}") from None
    rows = []
    for n, line in enumerate(lines, 1):
        try:
            r = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{n}: {exc}") from None
        for req in ("image_id", "obj_id", "status"):
            if req not in r:
                raise FormatError(f"{path}:{n}: lacks '{req}'")
        if r["status"] == "ok" and ("R" not in r or "t" not in r):
            raise FormatError(f"{path}:{n}: ok row lacks a pose")
        rows.append(r)
    return rows


def result_pose(row) -> Pose:
    return _pose_from_lists(row["R"], row["t"], f"result {row['image_id']}/{row['obj_id']}")


# ---------------------------------------------------------------------------
# run configuration

DEFAULT_CONFIG = {
    "pipeline": {},  # PipelineConfig field overrides
    "theta_o_table": None,  # optional: name from THETA_O_TABLES
    "oracle": {
        "noise_sigma": 0.0,
        "occlusion_fraction": 0.0,
        "err_noise": 0.0,
        "seed": 0,
    },
    "augment": {},  # AugmentConfig field overrides
    "symmetry": {},  # obj_id (as str) -> pool spec, e.g. "z180"
}


def load_config(path: str | None) -> dict:
    """JSON run config merged over defaults; None gives pure defaults."""
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is None:
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as f:
            user = json.load(f)
    except FileNotFoundError:
        raise FormatError(f"missing config file {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed config file {path}: {exc}") from None
    if not isinstance(user, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    for key, value in user.items():
        if key not in cfg:
            raise FormatError(f"{path}: unknown config key {key!r}")
        if isinstance(cfg[key], dict) and value is not None:
            if not isinstance(value, dict):
                raise FormatError(f"{path}: {key!r} must be an object")
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def pipeline_config_from(cfg: dict, obj_id=None, obj_name=None, seed=None) -> PipelineConfig:
    """PipelineConfig from a run config, applying any per-object theta_o table."""
    fields = dict(cfg.get("pipeline", {}))
    try:
        pc = PipelineConfig(**fields)
    except TypeError as exc:
        raise ConfigurationError(f"bad pipeline config: {exc}") from None
    table = cfg.get("theta_o_table")
    if table:
        key = obj_name if obj_name is not None else obj_id
        theta = theta_o_for(table, key, default=pc.theta_o)
        pc = PipelineConfig(
            theta_i=pc.theta_i,
            theta_o=theta,
            theta_re=pc.theta_re,
            ransac_iters=pc.ransac_iters,
            crop_factor=pc.crop_factor,
            input_size=pc.input_size,
            nonzero_norm=pc.nonzero_norm,
            rng_seed=pc.rng_seed,
        )
    if seed is not None:
        from dataclasses import replace

        pc = replace(pc, rng_seed=int(seed))
    return pc


def parse_pool(spec: str | None) -> SymmetryPool:
    """Symmetry pool DSL: 'none', '<axis><degrees>' for a cyclic pool
    (e.g. 'z180', 'z90', 'y180'), or 'continuous-<axis>'."""
    if spec is None or spec == "none":
        return SymmetryPool()
    if spec.startswith("continuous-"):
        axis = spec[len("continuous-"):]
        return SymmetryPool.continuous(axis)
    axis, digits = spec[0], spec[1:]
    if axis not in ("x", "y", "z") or not digits.isdigit():
        raise ConfigurationError(f"bad symmetry pool spec {spec!r}")
    deg = int(digits)
    if deg <= 0 or 360 % deg != 0:
        raise ConfigurationError(f"pool angle must divide 360, got {deg}")
    return SymmetryPool.cyclic(axis, 360 // deg)


def pool_for_object(cfg: dict, obj_id: int) -> SymmetryPool:
    return parse_pool(cfg.get("symmetry", {}).get(str(obj_id)))


# ---------------------------------------------------------------------------
# stage-1 outlier threshold selection

def select_theta_o(
    mesh: Mesh,
    box: NormalizationBox,
    candidates=(0.1, 0.2, 0.3),
    noise_sigma: float = 0.05,
    occlusion_fraction: float = 0.3,
    trials: int = 20,
    seed: int = 0,
    k: CameraIntrinsics | None = None,
):
    """Pick the stage-1 outlier threshold from artificially occluded samples.

    Visible pixels carry Gaussian coordinate noise; the occluded patch carries
    wrong coordinates with correspondingly large true error. A candidate scores
    by how many visible pixels it keeps minus how many corrupted pixels it
    lets through; the best (lowest on ties) candidate wins.

    Returns (theta, {candidate: (keep_rate, leak_rate, score)}).
    """
    if not candidates:
        raise InputError("no candidate thresholds")
    from .augment import _random_training_pose, default_training_intrinsics

    if k is None:
        k = default_training_intrinsics()
    visible_err = []
    corrupt_err = []
    for i in range(trials):
        rng = np.random.default_rng([seed, i])
        pose = _random_training_pose(rng, mesh, k)
        out = render(mesh, pose, k, box=box)
        ys, xs = np.nonzero(out.mask)
        if len(ys) == 0:
            continue
        target = int(round(occlusion_fraction * len(ys)))
        c = rng.integers(len(ys))
        d = (ys - ys[c]) ** 2 + (xs - xs[c]) ** 2
        order = np.argsort(d, kind="stable")
        hit = np.zeros(len(ys), dtype=bool)
        hit[order[:target]] = True
        clean = out.coord[ys, xs]
        noisy = np.clip(clean + rng.normal(0, noise_sigma, clean.shape), 0, 1)
        noisy[hit] = rng.uniform(0, 1, size=(int(hit.sum()), 3))
        err = np.minimum(np.abs(noisy - clean).sum(axis=1), 1.0)
        visible_err.append(err[~hit])
        corrupt_err.append(err[hit])
    visible = np.concatenate(visible_err)
    corrupt = np.concatenate(corrupt_err) if corrupt_err else np.zeros(0)
    report = {}
    for cand in candidates:
        keep = float((visible < cand).mean()) if len(visible) else 0.0
        leak = float((corrupt < cand).mean()) if len(corrupt) else 0.0
        report[cand] = (keep, leak, keep - leak)
    best = max(sorted(candidates), key=lambda c: (report[c][2], -c))
    return best, report
