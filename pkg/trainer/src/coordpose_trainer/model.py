"""Encoder-decoder network mapping an RGB crop to a coordinate image and a
per-pixel error map, plus the adversarial critic used during training."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture sizes.

    Four stride-2 5x5 encoder convs, a two-layer fully connected bottleneck,
    four stride-2 5x5 deconvs back up. The first three encoder outputs feed
    skip connections that hand half their channels to the decoder stage of
    matching resolution. Heads: 3-channel tanh remapped to [0,1] for
    coordinates, 1-channel sigmoid for the error map.
    """

    input_size: int = 128
    encoder_channels: tuple = (128, 256, 256, 512)
    bottleneck_dim: int = 256
    head_channels: int = 64
    critic_channels: tuple = (64, 128, 256, 512)

    def __post_init__(self):
        if self.input_size < 16 or self.input_size % 16 != 0:
            raise ValueError("input_size must be a positive multiple of 16")
        if len(self.encoder_channels) != 4:
            raise ValueError("exactly 4 encoder channel counts required")
        if any(c < 2 for c in self.encoder_channels):
            raise ValueError("encoder channels must be >= 2")
        if any(c % 2 for c in self.encoder_channels[:3]):
            raise ValueError("skip-connected channels must be even")
        if self.bottleneck_dim < 1 or self.head_channels < 1:
            raise ValueError("bottleneck and head sizes must be positive")
        if len(self.critic_channels) != 4 or any(c < 1 for c in self.critic_channels):
            raise ValueError("critic needs 4 positive channel counts")

    @property
    def grid_size(self) -> int:
        return self.input_size // 16


def _conv(cin, cout, stride):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 5, stride=stride, padding=2),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


def _deconv(cin, cout):
    return nn.Sequential(
        nn.ConvTranspose2d(cin, cout, 5, stride=2, padding=2, output_padding=1),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class CoordNet(nn.Module):
    """(b,3,s,s) uint8-scaled RGB in [0,1] -> coord (b,3,s,s) in [0,1],
    err (b,1,s,s) in (0,1)."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        c1, c2, c3, c4 = spec.encoder_channels
        g = spec.grid_size
        self.enc1 = _conv(3, c1, 2)
        self.enc2 = _conv(c1, c2, 2)
        self.enc3 = _conv(c2, c3, 2)
        self.enc4 = _conv(c3, c4, 2)
        self.fc_down = nn.Linear(c4 * g * g, spec.bottleneck_dim)
        self.fc_up = nn.Linear(spec.bottleneck_dim, c4 * g * g)
        self.dec1 = _deconv(c4, c3)
        self.dec2 = _deconv(c3 + c3 // 2, c2)
        self.dec3 = _deconv(c2 + c2 // 2, c1)
        self.dec4 = _deconv(c1 + c1 // 2, spec.head_channels)
        self.coord_head = nn.Conv2d(spec.head_channels, 3, 5, padding=2)
        self.err_head = nn.Conv2d(spec.head_channels, 1, 5, padding=2)

    def forward(self, rgb: torch.Tensor):
        if rgb.shape[-1] != self.spec.input_size or rgb.shape[-2] != self.spec.input_size:
            raise ValueError(
                f"expected {self.spec.input_size}x{self.spec.input_size} input, "
                f"got {tuple(rgb.shape[-2:])}"
            )
        e1 = self.enc1(rgb)
        e2 = self.enc2(e1)
        e3 = self.enc3(e2)
        e4 = self.enc4(e3)
        b = e4.shape[0]
        z = self.fc_up(self.fc_down(e4.reshape(b, -1)))
        x = z.reshape(b, *e4.shape[1:])
        x = self.dec1(x)
        x = self.dec2(torch.cat([x, e3[:, : e3.shape[1] // 2]], dim=1))
        x = self.dec3(torch.cat([x, e2[:, : e2.shape[1] // 2]], dim=1))
        x = self.dec4(torch.cat([x, e1[:, : e1.shape[1] // 2]], dim=1))
        coord = (torch.tanh(self.coord_head(x)) + 1.0) / 2.0
        err = torch.sigmoid(self.err_head(x))
        return coord, err


class Critic(nn.Module):
    """Strided-conv classifier on coordinate images; returns one logit per
    image (no final sigmoid, pair with a logit-based objective)."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        d1, d2, d3, d4 = spec.critic_channels
        g = spec.grid_size
        self.features = nn.Sequential(
            nn.Conv2d(3, d1, 5, stride=2, padding=2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(d1, d2, 5, stride=2, padding=2),
            nn.BatchNorm2d(d2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(d2, d3, 5, stride=2, padding=2),
            nn.BatchNorm2d(d3),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(d3, d4, 5, stride=2, padding=2),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.classify = nn.Linear(d4 * g * g, 1)

    def forward(self, coord: torch.Tensor) -> torch.Tensor:
        f = self.features(coord)
        return self.classify(f.reshape(f.shape[0], -1)).squeeze(1)
