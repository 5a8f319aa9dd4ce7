"""Dense coordinate-image pose estimation: rendering, losses, PnP recovery and metrics."""

from .augment import (
    AugmentConfig,
    default_training_intrinsics,
    load_training_set,
    make_batch,
    make_training_set,
)
from .exceptions import (
    ConfigurationError,
    CoordPoseError,
    FormatError,
    InputError,
    InsufficientCorrespondencesError,
    NoObjectError,
    PoseFailureError,
    UndefinedMetricError,
)
from .geometry import (
    CameraIntrinsics,
    Mesh,
    NormalizationBox,
    Pose,
    SymmetryPool,
    box_mesh,
    denormalize_coord,
    expand_pool,
    normalize_coord,
    rotation_about_axis,
)
from .images import (
    load_coord_png,
    load_depth_png,
    load_error_png,
    load_mask_png,
    load_rgb_png,
    save_coord_png,
    save_depth_png,
    save_error_png,
    save_mask_png,
    save_rgb_png,
)
from .losses import (
    error_pred_loss,
    gan_objective,
    loss_scan,
    recon_loss,
    sym_transform_image,
    transformer_loss,
)
from .metrics import (
    VsdParams,
    add,
    adi,
    is_correct_add,
    is_correct_vsd,
    iou2d,
    vsd,
)
from .pipeline import (
    CropMap,
    Detection,
    EstimateResult,
    PipelineConfig,
    build_correspondences,
    crop_region,
    estimate,
    extract_crop,
    stage1_refine,
    valid_pixel_mask,
)
from .ply import load_ply, save_ply
from .pnp import PoseEstimate, solve_pnp_epnp, solve_pnp_ransac
from .predictor import (
    FilePredictor,
    OraclePredictor,
    PredictorOutput,
    PredictRequest,
    read_prediction,
    write_prediction,
)
from .render import render, render_scene, shade_headlight

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "CameraIntrinsics",
    "ConfigurationError",
    "CoordPoseError",
    "CropMap",
    "Detection",
    "EstimateResult",
    "FilePredictor",
    "FormatError",
    "InputError",
    "InsufficientCorrespondencesError",
    "Mesh",
    "NoObjectError",
    "NormalizationBox",
    "OraclePredictor",
    "PipelineConfig",
    "Pose",
    "PoseEstimate",
    "PoseFailureError",
    "PredictRequest",
    "PredictorOutput",
    "SymmetryPool",
    "UndefinedMetricError",
    "VsdParams",
    "add",
    "adi",
    "box_mesh",
    "build_correspondences",
    "crop_region",
    "default_training_intrinsics",
    "denormalize_coord",
    "error_pred_loss",
    "estimate",
    "expand_pool",
    "extract_crop",
    "gan_objective",
    "iou2d",
    "is_correct_add",
    "is_correct_vsd",
    "load_coord_png",
    "load_depth_png",
    "load_error_png",
    "load_mask_png",
    "load_ply",
    "load_rgb_png",
    "load_training_set",
    "loss_scan",
    "make_batch",
    "make_training_set",
    "normalize_coord",
    "read_prediction",
    "recon_loss",
    "render",
    "render_scene",
    "rotation_about_axis",
    "save_coord_png",
    "save_depth_png",
    "save_error_png",
    "save_mask_png",
    "save_ply",
    "save_rgb_png",
    "shade_headlight",
    "solve_pnp_epnp",
    "solve_pnp_ransac",
    "stage1_refine",
    "sym_transform_image",
    "transformer_loss",
    "valid_pixel_mask",
    "vsd",
    "write_prediction",
]
