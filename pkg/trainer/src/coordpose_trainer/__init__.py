"""Toy-scale trainer for the coordpose coordinate-regression network."""

from .data import batch_indices, load_dataset, stack_samples
from .export import export_predictions, predict_crop
from .losses import (
    critic_loss,
    error_pred_loss,
    generator_gan_loss,
    pixel_l1,
    recolor,
    recon_loss,
    transformer_loss,
)
from .model import CoordNet, Critic, NetworkSpec
from .train import (
    TrainerConfig,
    TrainingDivergedError,
    load_checkpoint,
    lr_at,
    masked_mae,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "CoordNet",
    "Critic",
    "NetworkSpec",
    "TrainerConfig",
    "TrainingDivergedError",
    "batch_indices",
    "critic_loss",
    "error_pred_loss",
    "export_predictions",
    "generator_gan_loss",
    "load_checkpoint",
    "load_dataset",
    "lr_at",
    "masked_mae",
    "pixel_l1",
    "predict_crop",
    "recolor",
    "recon_loss",
    "save_checkpoint",
    "stack_samples",
    "train",
    "transformer_loss",
]
