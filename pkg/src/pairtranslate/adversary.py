"""Multi-scale conditional patch discriminators.

A discriminator sees ``cat([condition, candidate], dim=1)`` and returns one raw
logit map per scale.  Scale ``k`` receives the input average-pooled ``k`` times.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from pairtranslate.errors import ConfigError, DimensionError
from pairtranslate.model import init_weights


@dataclass
class DiscriminatorConfig:
    in_channels: int = 3
    num_scales: int = 3
    layers_per_scale: int = 4
    base_width: int = 64
    use_normalization: bool = False

    def validate(self) -> None:
        if self.num_scales < 1:
            raise ConfigError("num_scales must be >= 1")
        if self.layers_per_scale < 1:
            raise ConfigError("layers_per_scale must be >= 1")
        if self.base_width < 1 or self.in_channels < 1:
            raise ConfigError("widths must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class PatchDiscriminator(nn.Module):
    def __init__(self, in_channels: int, base_width: int, num_layers: int, use_normalization: bool):
        super().__init__()
        layers = []
        c_in = in_channels
        for i in range(num_layers):
            c_out = base_width * min(2 ** i, 8)
            layers.append(nn.Conv2d(c_in, c_out, 4, 2, 1))
            if use_normalization and i > 0:
                layers.append(nn.InstanceNorm2d(c_out))
            layers.append(nn.LeakyReLU(0.2))
            c_in = c_out
        layers.append(nn.Conv2d(c_in, 1, 3, 1, 1))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


class MultiScaleDiscriminator(nn.Module):
    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.scales = nn.ModuleList(
            PatchDiscriminator(
                2 * config.in_channels,
                config.base_width,
                config.layers_per_scale,
                config.use_normalization,
            )
            for _ in range(config.num_scales)
        )

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        min_side = 2 ** (self.config.num_scales - 1 + self.config.layers_per_scale)
        if min(x.shape[-2:]) < min_side:
            raise DimensionError(
                f"input {tuple(x.shape[-2:])} too small for {self.config.num_scales} scales "
                f"x {self.config.layers_per_scale} layers (need >= {min_side})"
            )
        maps = []
        for k, disc in enumerate(self.scales):
            if k:
                x = F.avg_pool2d(x, 2)
            maps.append(disc(x))
        return maps


def build_discriminator(config: DiscriminatorConfig, seed: int) -> MultiScaleDiscriminator:
    disc = MultiScaleDiscriminator(config)
    init_weights(disc, torch.Generator().manual_seed(int(seed)))
    return disc


def score_pair(disc: MultiScaleDiscriminator, condition: torch.Tensor, candidate: torch.Tensor) -> list[torch.Tensor]:
    """Score a (condition, candidate) pair; returns per-scale logit maps."""
    if condition.shape != candidate.shape:
        raise DimensionError(f"condition {tuple(condition.shape)} != candidate {tuple(candidate.shape)}")
    if condition.dim() != 4 or condition.shape[1] != disc.config.in_channels:
        raise DimensionError(f"expected (N, {disc.config.in_channels}, H, W), got {tuple(condition.shape)}")
    return disc(torch.cat([condition, candidate], dim=1))
