"""Two-stage pose estimation: crop, refine the detection, build correspondences, solve.

Stage 1 predicts on a padded crop of the detector box and uses the result only
to recenter and resize the box. Stage 2 predicts on the refined crop and turns
every confident pixel into a 2D-3D correspondence for RANSAC PnP.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import cv2
import numpy as np

from .exceptions import (
    ConfigurationError,
    InputError,
    InsufficientCorrespondencesError,
    NoObjectError,
)
from .geometry import CameraIntrinsics, NormalizationBox, denormalize_coord
from .pnp import PoseEstimate, solve_pnp_ransac


@dataclass(frozen=True)
class Detection:
    """2D detector output: bbox as (center_x, center_y, width, height) in px."""

    obj_id: int
    bbox: tuple
    image_id: int = 0
    rgb: np.ndarray | None = None

    def __post_init__(self):
        if len(self.bbox) != 4 or self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise InputError("bbox must be (cx, cy, w, h) with positive size")


@dataclass(frozen=True)
class PipelineConfig:
    theta_i: float = 0.1
    theta_o: float = 0.2
    theta_re: float = 3.0
    ransac_iters: int = 300
    crop_factor: float = 1.5
    input_size: int = 128
    nonzero_norm: float = 0.3
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.theta_i, self.theta_o, self.theta_re) <= 0:
            raise ConfigurationError("thresholds must be positive")
        if self.crop_factor < 1.0:
            raise ConfigurationError("crop_factor must be >= 1")
        if self.input_size < 8 or self.ransac_iters < 1:
            raise ConfigurationError("input_size or ransac_iters out of range")


@dataclass(frozen=True)
class CropMap:
    """Affine map between crop pixels and source pixels: src = offset + scale*crop."""

    offset: tuple  # (x, y) source position of crop pixel (0,0) center
    scale: float  # source px per crop px
    size: int  # crop is size x size

    def crop_to_source(self, crop_px):
        return np.asarray(crop_px, dtype=np.float64) * self.scale + self.offset

    def source_to_crop(self, src_px):
        return (np.asarray(src_px, dtype=np.float64) - self.offset) / self.scale

    def crop_intrinsics(self, k: CameraIntrinsics) -> CameraIntrinsics:
        """Intrinsics under which rendering the crop directly equals cropping a render."""
        return CameraIntrinsics(
            fx=k.fx / self.scale,
            fy=k.fy / self.scale,
            cx=(k.cx - self.offset[0]) / self.scale,
            cy=(k.cy - self.offset[1]) / self.scale,
            width=self.size,
            height=self.size,
        )


@dataclass(frozen=True)
class CorrespondenceSet:
    pixels: np.ndarray  # (n,2) source-image px
    points: np.ndarray  # (n,3) object-frame mm
    errors: np.ndarray  # (n,) predicted per-pixel error


def crop_region(bbox, crop_factor: float, input_size: int) -> CropMap:
    """Square crop around the bbox center, side = max(w,h) * crop_factor.

    The region may extend past the image; samplers pad with zeros out there.
    """
    cx, cy, w, h = bbox
    if w <= 0 or h <= 0:
        raise InputError("bbox must have positive size")
    side = max(w, h) * crop_factor
    scale = side / input_size
    offset = (cx - side / 2.0 + 0.5 * scale, cy - side / 2.0 + 0.5 * scale)
    return CropMap(offset=offset, scale=scale, size=input_size)


def extract_crop(image: np.ndarray, crop: CropMap) -> np.ndarray:
    """Bilinear resample of the crop region; zero padding outside the image."""
    m = np.array(
        [[crop.scale, 0.0, crop.offset[0]], [0.0, crop.scale, crop.offset[1]]]
    )
    return cv2.warpAffine(
        image,
        m,
        (crop.size, crop.size),
        flags=cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )


def valid_pixel_mask(coord, err, theta_o: float, nonzero_norm: float) -> np.ndarray:
    """Object evidence: confidently non-zero coords, or low predicted error on
    pixels with any coordinate signal at all."""
    coord = np.asarray(coord, dtype=np.float64)
    err = np.asarray(err, dtype=np.float64)
    norm = np.linalg.norm(coord, axis=2)
    return (norm > nonzero_norm) | ((err < theta_o) & (norm > 0))


def stage1_refine(
    coord, err, crop: CropMap, theta_o: float, nonzero_norm: float, detection: Detection
):
    """Recenter and resize the detection from the stage-1 prediction.

    The new box sits at the valid-mask centroid and spans its tight square
    extent, both mapped back to source coordinates. Returns the refined
    detection and the valid mask in crop coordinates.
    """
    valid = valid_pixel_mask(coord, err, theta_o, nonzero_norm)
    if not valid.any():
        raise NoObjectError("stage-1 prediction contains no valid object pixels")
    ys, xs = np.nonzero(valid)
    centroid_crop = (xs.mean(), ys.mean())
    cx, cy = crop.crop_to_source(centroid_crop)
    extent_crop = max(xs.max() - xs.min() + 1, ys.max() - ys.min() + 1)
    side_src = extent_crop * crop.scale
    refined = replace(detection, bbox=(float(cx), float(cy), float(side_src), float(side_src)))
    return refined, valid


def build_correspondences(
    coord,
    err,
    crop: CropMap,
    theta_i: float,
    nonzero_norm: float,
    box: NormalizationBox,
) -> CorrespondenceSet:
    """One 2D-3D pair per pixel with non-zero coords and error below theta_i."""
    coord = np.asarray(coord, dtype=np.float64)
    err = np.asarray(err, dtype=np.float64)
    if coord.shape[:2] != (crop.size, crop.size) or err.shape != (crop.size, crop.size):
        raise InputError("prediction size does not match the crop")
    norm = np.linalg.norm(coord, axis=2)
    keep = (err < theta_i) & (norm > nonzero_norm)
    count = int(keep.sum())
    if count < 4:
        raise InsufficientCorrespondencesError(
            f"only {count} correspondences below theta_i"
        )
    ys, xs = np.nonzero(keep)
    pixels = crop.crop_to_source(np.stack([xs, ys], axis=1).astype(np.float64))
    points = denormalize_coord(coord[ys, xs], box)
    return CorrespondenceSet(pixels=pixels, points=points, errors=err[ys, xs])


@dataclass(frozen=True)
class EstimateResult:
    """Final pose plus the per-stage diagnostics the caller may want to log."""

    estimate: PoseEstimate
    refined_detection: Detection
    stage1_valid_pixels: int
    correspondence_count: int


def estimate(
    detection: Detection,
    predictor,
    config: PipelineConfig,
    k: CameraIntrinsics,
    box: NormalizationBox,
    detection_index: int = 0,
) -> EstimateResult:
    """Run the two-stage pipeline for one detection.

    The RANSAC stream is derived from (config seed, detection index) so
    detections can be processed in any order or in parallel with identical
    results.
    """
    from .predictor import PredictRequest

    crop1 = crop_region(detection.bbox, config.crop_factor, config.input_size)
    rgb1 = extract_crop(detection.rgb, crop1) if detection.rgb is not None else None
    out1 = predictor.predict(
        PredictRequest(
            rgb=rgb1,
            obj_id=detection.obj_id,
            image_id=detection.image_id,
            stage=1,
            crop=crop1,
            k=k,
        )
    )
    refined, valid = stage1_refine(
        out1.coord, out1.err, crop1, config.theta_o, config.nonzero_norm, detection
    )

    crop2 = crop_region(refined.bbox, config.crop_factor, config.input_size)
    rgb2 = None
    if detection.rgb is not None:
        rgb2 = extract_crop(detection.rgb, crop2)
        # stage 2 sees only the pixels stage 1 considered object
        valid_u8 = valid.astype(np.uint8)
        m = np.array(
            [
                [crop2.scale / crop1.scale, 0.0, (crop2.offset[0] - crop1.offset[0]) / crop1.scale],
                [0.0, crop2.scale / crop1.scale, (crop2.offset[1] - crop1.offset[1]) / crop1.scale],
            ]
        )
        valid2 = cv2.warpAffine(
            valid_u8,
            m,
            (crop2.size, crop2.size),
            flags=cv2.INTER_NEAREST | cv2.WARP_INVERSE_MAP,
            borderMode=cv2.BORDER_CONSTANT,
            borderValue=0,
        )
        rgb2 = rgb2 * valid2[:, :, None]
    out2 = predictor.predict(
        PredictRequest(
            rgb=rgb2,
            obj_id=detection.obj_id,
            image_id=detection.image_id,
            stage=2,
            crop=crop2,
            k=k,
        )
    )
    if out2.bbox is not None:
        # prediction files carry the box their crop was actually built from
        crop2 = crop_region(tuple(out2.bbox), config.crop_factor, config.input_size)

    cs = build_correspondences(
        out2.coord, out2.err, crop2, config.theta_i, config.nonzero_norm, box
    )
    rng = np.random.default_rng([config.rng_seed, detection_index])
    est = solve_pnp_ransac(
        cs.points,
        cs.pixels,
        k,
        theta_re=config.theta_re,
        iters=config.ransac_iters,
        rng=rng,
    )
    return EstimateResult(
        estimate=est,
        refined_detection=refined,
        stage1_valid_pixels=int(valid.sum()),
        correspondence_count=len(cs.points),
    )
