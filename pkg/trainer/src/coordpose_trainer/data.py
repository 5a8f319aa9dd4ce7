"""Dataset loading and deterministic batching.

Datasets are the directory layout the coordpose augmentation tooling writes
(rgb/NNNNNN.png, coord/NNNNNN.png, mask/NNNNNN.png, meta.jsonl); this module
only turns them into channels-first tensors.
"""

from __future__ import annotations

import numpy as np
import torch

from coordpose import load_training_set


def load_dataset(dir_path: str) -> list:
    """Samples as (rgb uint8, coord float, mask bool) triples, meta discarded."""
    samples, _ = load_training_set(dir_path)
    return samples


def stack_samples(samples):
    """The whole sample list as one tensor triple.

    Returns (rgb, coord, mask): rgb and coord are (n, 3, h, w) float32 with
    rgb rescaled to [0,1], mask is (n, h, w) bool.
    """
    if len(samples) == 0:
        raise ValueError("no samples")
    rgb = np.stack([np.asarray(s[0]) for s in samples]).astype(np.float32) / 255.0
    coord = np.stack([np.asarray(s[1]) for s in samples]).astype(np.float32)
    mask = np.stack([np.asarray(s[2]).astype(bool) for s in samples])
    rgb_t = torch.from_numpy(rgb).permute(0, 3, 1, 2).contiguous()
    coord_t = torch.from_numpy(coord).permute(0, 3, 1, 2).contiguous()
    return rgb_t, coord_t, torch.from_numpy(mask)


def batch_indices(seed: int, iteration: int, n_samples: int, batch_size: int) -> np.ndarray:
    """Sample indices for one iteration, drawn with replacement.

    The stream is keyed by (seed, iteration) so any iteration's batch can be
    reproduced without generating the ones before it.
    """
    if n_samples < 1 or batch_size < 1:
        raise ValueError("n_samples and batch_size must be positive")
    rng = np.random.default_rng([seed, iteration])
    return rng.integers(n_samples, size=batch_size)
