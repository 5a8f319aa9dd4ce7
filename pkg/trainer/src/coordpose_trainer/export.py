"""Run a trained generator over detections and persist replayable predictions.

The two crop stages mirror the pose pipeline exactly: stage 1 predicts on the
padded detector box, its valid-pixel refinement defines the stage-2 crop, and
the stage-2 input keeps only pixels stage 1 considered object. Stage-1 files
are re-read before refining so the stored (quantized) values drive the
geometry, which is exactly what a later replay sees.
"""

from __future__ import annotations

import os

import cv2
import numpy as np
import torch

from coordpose import (
    NoObjectError,
    PipelineConfig,
    crop_region,
    extract_crop,
    read_prediction,
    stage1_refine,
    write_prediction,
)


def predict_crop(generator, rgb_crop, nonzero_norm: float = 0.3):
    """Single-crop inference returning (coord (s,s,3), err (s,s)) float64.

    Pixels whose coordinate norm is at or below nonzero_norm are snapped to
    exact zero with err forced to 1. The tanh head emits small nonzero values
    on background, which the pipeline's valid-pixel test would otherwise read
    as object evidence; rendered targets use exact zeros there.
    """
    x = torch.from_numpy(np.asarray(rgb_crop, dtype=np.float32) / 255.0)
    x = x.permute(2, 0, 1).unsqueeze(0)
    was_training = generator.training
    generator.eval()
    with torch.no_grad():
        coord_t, err_t = generator(x)
    generator.train(was_training)
    coord = coord_t[0].permute(1, 2, 0).numpy().astype(np.float64)
    err = err_t[0, 0].numpy().astype(np.float64)
    background = np.linalg.norm(coord, axis=2) <= nonzero_norm
    coord[background] = 0.0
    err[background] = 1.0
    return coord, err


def export_predictions(generator, scene_rgb, detections, out_dir, config: PipelineConfig):
    """Write stage-1 and stage-2 prediction files for detections of one image.

    Returns one status row per detection: "ok", or "no_object" when the
    stage-1 output had no valid pixels; stage-2 files are then not written
    and a pipeline replay fails at the same point.
    """
    os.makedirs(out_dir, exist_ok=True)
    scene_rgb = np.asarray(scene_rgb)
    statuses = []
    for det in detections:
        crop1 = crop_region(det.bbox, config.crop_factor, config.input_size)
        rgb1 = extract_crop(scene_rgb, crop1)
        coord1, err1 = predict_crop(generator, rgb1, config.nonzero_norm)
        write_prediction(out_dir, det.image_id, det.obj_id, 1, coord1, err1, det.bbox)
        stored1 = read_prediction(out_dir, det.image_id, det.obj_id, 1)
        try:
            refined, valid = stage1_refine(
                stored1.coord, stored1.err, crop1, config.theta_o, config.nonzero_norm, det
            )
        except NoObjectError:
            statuses.append(
                {"image_id": det.image_id, "obj_id": det.obj_id, "status": "no_object"}
            )
            continue
        crop2 = crop_region(refined.bbox, config.crop_factor, config.input_size)
        rgb2 = extract_crop(scene_rgb, crop2)
        # the pipeline masks the stage-2 input to stage-1 object evidence
        m = np.array(
            [
                [
                    crop2.scale / crop1.scale,
                    0.0,
                    (crop2.offset[0] - crop1.offset[0]) / crop1.scale,
                ],
                [
                    0.0,
                    crop2.scale / crop1.scale,
                    (crop2.offset[1] - crop1.offset[1]) / crop1.scale,
                ],
            ]
        )
        valid2 = cv2.warpAffine(
            valid.astype(np.uint8),
            m,
            (crop2.size, crop2.size),
            flags=cv2.INTER_NEAREST | cv2.WARP_INVERSE_MAP,
            borderMode=cv2.BORDER_CONSTANT,
            borderValue=0,
        )
        rgb2 = rgb2 * valid2[:, :, None]
        coord2, err2 = predict_crop(generator, rgb2, config.nonzero_norm)
        write_prediction(out_dir, det.image_id, det.obj_id, 2, coord2, err2, refined.bbox)
        statuses.append({"image_id": det.image_id, "obj_id": det.obj_id, "status": "ok"})
    return statuses
