"""Sources of per-crop coordinate and error predictions.

The pipeline is agnostic to where predictions come from. The oracle renders
ground truth and corrupts it on demand, which pins down pipeline behavior in
tests without a trained network. The file predictor replays predictions that
were exported to disk, e.g. by a training run.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError, InputError
from .geometry import CameraIntrinsics
from .images import load_coord_png, load_error_png, save_coord_png, save_error_png
from .render import render


@dataclass(frozen=True)
class PredictRequest:
    """Everything a predictor may need for one crop of one detection."""

    rgb: np.ndarray | None
    obj_id: int
    image_id: int
    stage: int
    crop: object  # CropMap
    k: CameraIntrinsics  # source-image intrinsics


@dataclass(frozen=True)
class PredictorOutput:
    coord: np.ndarray  # (s,s,3) normalized coords in [0,1]
    err: np.ndarray  # (s,s) predicted per-pixel error
    bbox: tuple | None = None  # crop bbox the prediction was computed for

    def __post_init__(self):
        coord = np.asarray(self.coord, dtype=np.float64)
        err = np.asarray(self.err, dtype=np.float64)
        if coord.ndim != 3 or coord.shape[2] != 3 or err.shape != coord.shape[:2]:
            raise InputError("coord must be (s,s,3) with a matching (s,s) err map")
        object.__setattr__(self, "coord", coord)
        object.__setattr__(self, "err", err)


class OraclePredictor:
    """Renders the ground-truth coordinate image for the requested crop.

    Corruption knobs: `noise_sigma` adds Gaussian noise to object-pixel
    coordinates (clamped to [0,1]), `occlusion_fraction` zeroes a contiguous
    patch of object pixels, `err_noise` perturbs the error map by a bounded
    uniform amount. The emitted error map is the true per-pixel L1 distance
    between the corrupted and clean coordinates, capped at 1, so occluded
    pixels carry err 1 and untouched pixels carry err 0.
    """

    def __init__(
        self,
        objects: dict,
        poses: dict,
        noise_sigma: float = 0.0,
        occlusion_fraction: float = 0.0,
        err_noise: float = 0.0,
        seed: int = 0,
    ):
        if not 0.0 <= occlusion_fraction <= 1.0:
            raise InputError("occlusion_fraction must be in [0, 1]")
        if noise_sigma < 0 or err_noise < 0:
            raise InputError("noise magnitudes must be non-negative")
        self.objects = dict(objects)  # obj_id -> (Mesh, NormalizationBox)
        self.poses = dict(poses)  # (image_id, obj_id) -> Pose
        self.noise_sigma = noise_sigma
        self.occlusion_fraction = occlusion_fraction
        self.err_noise = err_noise
        self.seed = seed

    def predict(self, req: PredictRequest) -> PredictorOutput:
        try:
            mesh, box = self.objects[req.obj_id]
            pose = self.poses[(req.image_id, req.obj_id)]
        except KeyError as exc:
            raise InputError(f"oracle has no ground truth for {exc}") from None
        out = render(mesh, pose, req.crop.crop_intrinsics(req.k), box=box)
        clean = out.coord
        coord = clean.copy()
        mask = out.mask
        rng = np.random.default_rng(
            [self.seed, req.image_id, req.obj_id, req.stage]
        )
        if self.noise_sigma > 0 and mask.any():
            noise = rng.normal(0.0, self.noise_sigma, size=(int(mask.sum()), 3))
            coord[mask] = np.clip(coord[mask] + noise, 0.0, 1.0)
        occluded = np.zeros(mask.shape, dtype=bool)
        if self.occlusion_fraction > 0 and mask.any():
            ys, xs = np.nonzero(mask)
            target = int(round(self.occlusion_fraction * len(ys)))
            if target > 0:
                center = rng.integers(len(ys))
                d2 = (ys - ys[center]) ** 2 + (xs - xs[center]) ** 2
                hit = np.argsort(d2, kind="stable")[:target]
                coord[ys[hit], xs[hit]] = 0.0
                occluded[ys[hit], xs[hit]] = True
        err = np.minimum(np.abs(coord - clean).sum(axis=2), 1.0)
        err[occluded] = 1.0
        if self.err_noise > 0:
            err = err + rng.uniform(-self.err_noise, self.err_noise, size=err.shape)
            err = np.clip(err, 0.0, 1.0)
        return PredictorOutput(coord=coord, err=err)


def _prediction_stem(image_id: int, obj_id: int, stage: int) -> str:
    return f"{image_id:06d}_{obj_id:06d}_s{stage}"


def write_prediction(
    dir_path: str,
    image_id: int,
    obj_id: int,
    stage: int,
    coord: np.ndarray,
    err: np.ndarray,
    bbox,
) -> None:
    """Persist one prediction as a 16-bit PNG pair plus a JSON sidecar."""
    stem = os.path.join(dir_path, _prediction_stem(image_id, obj_id, stage))
    save_coord_png(stem + "_coord.png", coord)
    save_error_png(stem + "_err.png", err)
    sidecar = {
        "obj_id": int(obj_id),
        "bbox": None if bbox is None else [float(v) for v in bbox],
        "stage": int(stage),
    }
    tmp = stem + ".json.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(sidecar, f)
    os.replace(tmp, stem + ".json")


def read_prediction(dir_path: str, image_id: int, obj_id: int, stage: int) -> PredictorOutput:
    stem = os.path.join(dir_path, _prediction_stem(image_id, obj_id, stage))
    coord = load_coord_png(stem + "_coord.png")
    err = load_error_png(stem + "_err.png")
    try:
        with open(stem + ".json", "r", encoding="utf-8") as f:
            sidecar = json.load(f)
    except FileNotFoundError:
        raise FormatError(f"missing prediction sidecar {stem}.json") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed prediction sidecar {stem}.json: {exc}") from None
    for key in ("obj_id", "bbox", "stage"):
        if key not in sidecar:
            raise FormatError(f"prediction sidecar {stem}.json lacks '{key}'")
    bbox = sidecar["bbox"]
    if bbox is not None and len(bbox) != 4:
        raise FormatError(f"prediction sidecar {stem}.json has a malformed bbox")
    if err.shape != coord.shape[:2]:
        raise FormatError(f"prediction {stem}: coord and err sizes differ")
    if bbox is not None:
        bbox = tuple(float(v) for v in bbox)
    return PredictorOutput(coord=coord, err=err, bbox=bbox)


class FilePredictor:
    """Replays predictions exported with write_prediction, keyed by
    (image_id, obj_id, stage)."""

    def __init__(self, root: str):
        self.root = root

    def predict(self, req: PredictRequest) -> PredictorOutput:
        return read_prediction(self.root, req.image_id, req.obj_id, req.stage)
