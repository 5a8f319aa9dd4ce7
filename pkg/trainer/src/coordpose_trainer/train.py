"""Alternating generator/critic optimization on coordinate-image datasets.

The generator minimizes gan_weight * adversarial term + lambda_transformer *
symmetry-aware reconstruction + lambda_error * error-map regression; the
critic learns to tell target coordinate images from generated ones. Weight
init and batch composition are both derived from the config seed, so a run
repeats exactly on the same hardware.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
import torch

from coordpose import make_batch

from .data import batch_indices, stack_samples
from .losses import critic_loss, error_pred_loss, generator_gan_loss, transformer_loss
from .model import CoordNet, Critic, NetworkSpec


class TrainingDivergedError(RuntimeError):
    """A loss value stopped being finite; the training state is unusable."""


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 50
    lr: float = 1e-4
    iterations: int = 25000
    lr_drop_every: int = 12000
    lr_drop: float = 0.1
    beta: float = 3.0
    lambda_transformer: float = 100.0
    lambda_error: float = 50.0
    gan_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 0 or self.lr_drop_every < 1:
            raise ValueError("batch_size and lr_drop_every must be positive, iterations >= 0")
        if self.lr <= 0 or not 0.0 < self.lr_drop <= 1.0 or self.beta <= 0:
            raise ValueError("lr and beta must be positive, lr_drop in (0, 1]")
        # zero weights are legitimate ablations; negative ones are not
        if min(self.lambda_transformer, self.lambda_error, self.gan_weight) < 0:
            raise ValueError("loss weights must be non-negative")


def lr_at(config: TrainerConfig, iteration: int) -> float:
    """Staircase schedule: the base rate decays by lr_drop every lr_drop_every."""
    return config.lr * config.lr_drop ** (iteration // config.lr_drop_every)


def train(samples, spec: NetworkSpec, config: TrainerConfig, pool, box, aug=None, backgrounds=None):
    """Run the full training loop; returns (generator, critic, history).

    samples: (rgb uint8, coord, mask) triples sized spec.input_size.
    pool: 3x3 object-frame symmetry rotations, identity first; a single-entry
    pool reduces the reconstruction term to the plain weighted L1.
    box: the coordinate normalization box the targets were rendered with.
    aug: optional coordpose AugmentConfig. When given, samples must be clean
    renders on black and every batch is freshly re-augmented (backgrounds,
    jitter, occlusion, rotation), alternating full-image and masked-input
    styles; the effective dataset is then unbounded. When None, batches are
    drawn from the samples as stored.
    history holds one dict per iteration with every loss term and the
    learning rate in effect.
    """
    if len(pool) == 0:
        raise ValueError("pool must contain at least the identity rotation")
    if aug is not None:
        aug = replace(aug, batch_size=config.batch_size)
        if len(samples) == 0:
            raise ValueError("no samples")
    else:
        rgb_all, coord_all, mask_all = stack_samples(samples)
    torch.manual_seed(config.seed)
    generator = CoordNet(spec)
    critic = Critic(spec)
    opt_g = torch.optim.Adam(generator.parameters(), lr=config.lr)
    opt_d = torch.optim.Adam(critic.parameters(), lr=config.lr)
    generator.train()
    critic.train()
    history = []
    for it in range(config.iterations):
        lr = lr_at(config, it)
        for opt in (opt_g, opt_d):
            for group in opt.param_groups:
                group["lr"] = lr
        if aug is not None:
            batch = make_batch(samples, aug, config.seed, it, backgrounds=backgrounds)
            rgb = torch.from_numpy(
                batch["rgb"].astype(np.float32) / 255.0
            ).permute(0, 3, 1, 2)
            coord_target = torch.from_numpy(batch["coord"].astype(np.float32)).permute(
                0, 3, 1, 2
            )
            mask = torch.from_numpy(batch["mask"])
        else:
            idx = torch.from_numpy(
                batch_indices(config.seed, it, len(samples), config.batch_size)
            )
            rgb = rgb_all[idx]
            coord_target = coord_all[idx]
            mask = mask_all[idx]

        coord_pred, err_pred = generator(rgb)
        t_loss, _, selected = transformer_loss(
            coord_pred, coord_target, mask, config.beta, pool, box
        )
        # the error head regresses the gap to the target that was actually
        # matched; both sides detached so it never steers the coord head
        e_loss = error_pred_loss(err_pred, coord_pred.detach(), selected.detach())
        if config.gan_weight > 0:
            g_gan = generator_gan_loss(critic(coord_pred))
        else:
            g_gan = coord_pred.new_zeros(())
        g_total = (
            config.gan_weight * g_gan
            + config.lambda_transformer * t_loss
            + config.lambda_error * e_loss
        )
        opt_g.zero_grad(set_to_none=True)
        g_total.backward()
        opt_g.step()

        if config.gan_weight > 0:
            d_loss = critic_loss(critic(coord_target), critic(coord_pred.detach()))
            opt_d.zero_grad(set_to_none=True)
            d_loss.backward()
            opt_d.step()
        else:
            d_loss = torch.zeros(())

        row = {
            "iteration": it,
            "lr": lr,
            "transformer": float(t_loss.detach()),
            "error": float(e_loss.detach()),
            "gan_generator": float(g_gan.detach()),
            "critic": float(d_loss.detach()),
            "total": float(g_total.detach()),
        }
        if not all(math.isfinite(v) for v in row.values()):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}: {row}")
        history.append(row)
    return generator, critic, history


def masked_mae(generator, samples, chunk: int = 16) -> float:
    """Mean absolute coordinate error over the object pixels of all samples.

    Averages |pred - target| over channels, then over every masked pixel, so
    the value is in coordinate units regardless of object size on screen.
    """
    rgb_all, coord_all, mask_all = stack_samples(samples)
    was_training = generator.training
    generator.eval()
    total = 0.0
    count = 0
    with torch.no_grad():
        for lo in range(0, rgb_all.shape[0], chunk):
            pred, _ = generator(rgb_all[lo : lo + chunk])
            diff = (pred - coord_all[lo : lo + chunk]).abs().mean(dim=1)
            m = mask_all[lo : lo + chunk]
            total += float(diff[m].sum())
            count += int(m.sum())
    generator.train(was_training)
    if count == 0:
        raise ValueError("samples contain no masked pixels")
    return total / count


def save_checkpoint(path, generator, critic, spec: NetworkSpec, config: TrainerConfig):
    """Persist weights plus the spec/config needed to rebuild the models."""
    payload = {
        "format_version": 1,
        "spec": asdict(spec),
        "config": asdict(config),
        "generator": generator.state_dict(),
        "critic": critic.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path):
    """Rebuild (generator, critic, spec, config) from a checkpoint file.

    Models come back in eval mode. Only tensors and primitives are stored, so
    the file loads under torch's weights_only regime.
    """
    payload = torch.load(path, map_location="cpu", weights_only=True)
    spec = NetworkSpec(**payload["spec"])
    config = TrainerConfig(**payload["config"])
    generator = CoordNet(spec)
    generator.load_state_dict(payload["generator"])
    critic = Critic(spec)
    critic.load_state_dict(payload["critic"])
    generator.eval()
    critic.eval()
    return generator, critic, spec, config
