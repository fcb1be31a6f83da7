"""Dual-channel U-Net regressor and the patch observer CNN.

The regressor maps water-subtracted image pairs (low-resolution SOS and
reflectivity) to a water-subtracted SOS estimate. The full-size
configuration is depth 6 with base width 32 doubling to 1024, leaky
ReLU slope 0.2, no output activation. Inputs whose spatial size is not
divisible by 2**depth are reflect-padded up and cropped on output.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class UNetSpec:
    """Architecture knobs for the image-to-image network."""

    in_channels: int = 2
    depth: int = 6
    base_channels: int = 32
    negative_slope: float = 0.2
    auto_pad: bool = True   # reflect-pad indivisible inputs, crop outputs

    def __post_init__(self):
        if self.in_channels not in (1, 2):
            raise ConfigError("in_channels must be 1 or 2")
        if self.depth < 2:
            raise ConfigError("depth must be >= 2")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be >= 1")

    @property
    def divisor(self) -> int:
        return 2 ** self.depth


def desk_spec(in_channels: int = 2) -> UNetSpec:
    """Small configuration that trains in minutes on one CPU."""
    return UNetSpec(in_channels=in_channels, depth=4, base_channels=16)


def paper_spec(in_channels: int = 2) -> UNetSpec:
    """Full-size configuration (about 31.1M parameters dual-channel)."""
    return UNetSpec(in_channels=in_channels, depth=6, base_channels=32)


def _block(c_in, c_out, slope):
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1),
        nn.LeakyReLU(slope, inplace=True),
        nn.Conv2d(c_out, c_out, 3, padding=1),
        nn.LeakyReLU(slope, inplace=True),
    )


class UNet(nn.Module):
    """Encoder-decoder with skip connections and a linear 1x1 head."""

    def __init__(self, spec: UNetSpec):
        super().__init__()
        self.spec = spec
        chans = [spec.base_channels * 2 ** i for i in range(spec.depth)]
        self.enc = nn.ModuleList()
        c_prev = spec.in_channels
        for c in chans:
            self.enc.append(_block(c_prev, c, spec.negative_slope))
            c_prev = c
        self.pool = nn.MaxPool2d(2)
        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for c in reversed(chans[:-1]):
            self.up.append(nn.ConvTranspose2d(c_prev, c, 2, stride=2))
            self.dec.append(_block(2 * c, c, spec.negative_slope))
            c_prev = c
        self.head = nn.Conv2d(chans[0], 1, 1)

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError("expected input of shape [N, C, H, W]")
        if x.shape[1] != self.spec.in_channels:
            raise ShapeError(
                f"expected {self.spec.in_channels} input channels, "
                f"got {x.shape[1]}")
        h, w = x.shape[2], x.shape[3]
        d = self.spec.divisor
        ph = (-h) % d
        pw = (-w) % d
        if (ph or pw) and not self.spec.auto_pad:
            raise ShapeError(
                f"spatial size {h}x{w} not divisible by {d}")
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="reflect")
        skips = []
        for i, blk in enumerate(self.enc):
            if i > 0:
                x = self.pool(x)
            x = blk(x)
            skips.append(x)
        for up, dec, skip in zip(self.up, self.dec, reversed(skips[:-1])):
            x = up(x)
            x = dec(torch.cat([x, skip], dim=1))
        x = self.head(x)
        return x[:, :, :h, :w]


def build_model(spec: UNetSpec) -> UNet:
    return UNet(spec)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


@dataclass(frozen=True)
class ObserverSpec:
    """Patch classifier: conv blocks with pooling, then a sigmoid head."""

    patch_size: int = 96
    channels: int = 64
    n_blocks: int = 3
    kernel_size: int = 5
    negative_slope: float = 0.2

    def __post_init__(self):
        if self.patch_size < 2 ** self.n_blocks:
            raise ConfigError("patch smaller than the pooling pyramid")
        if self.kernel_size % 2 == 0:
            raise ConfigError("kernel size must be odd")


class ObserverNet(nn.Module):
    """Scores the posterior probability that a patch contains a signal."""

    def __init__(self, spec: ObserverSpec = ObserverSpec()):
        super().__init__()
        self.spec = spec
        layers = []
        c_prev = 1
        for _ in range(spec.n_blocks):
            layers += [
                nn.Conv2d(c_prev, spec.channels, spec.kernel_size,
                          padding=spec.kernel_size // 2),
                nn.BatchNorm2d(spec.channels),
                nn.LeakyReLU(spec.negative_slope, inplace=True),
                nn.AvgPool2d(2),
            ]
            c_prev = spec.channels
        self.features = nn.Sequential(*layers)
        side = spec.patch_size // 2 ** spec.n_blocks
        self.head = nn.Linear(spec.channels * side * side, 1)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError("expected input of shape [N, 1, H, W]")
        if x.shape[2] != self.spec.patch_size or \
                x.shape[3] != self.spec.patch_size:
            raise ShapeError(
                f"expected {self.spec.patch_size} square patches")
        z = self.features(x)
        return torch.sigmoid(self.head(z.flatten(1))).squeeze(1)
