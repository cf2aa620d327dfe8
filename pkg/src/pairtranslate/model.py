"""Dual encoder/decoder generators whose high-level blocks are tied across domains.

Each domain owns a private downsampling stack (encoder) and a private
nearest-neighbour upsampling stack (decoder).  The residual blocks closest to
the latent map are shared: with ``share_weights`` on, ``encoder_A.shared`` and
``encoder_B.shared`` are literally the same ``nn.Module``.
"""
from __future__ import annotations

import copy
import enum
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from pairtranslate.errors import ConfigError, DimensionError


class Domain(str, enum.Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "Domain":
        return Domain.B if self is Domain.A else Domain.A


@dataclass
class GeneratorConfig:
    in_channels: int = 3
    base_width: int = 32
    num_downsamples: int = 4
    num_shared_blocks: int = 2
    patch_size: int = 256
    share_weights: bool = True
    use_normalization: bool = True

    def validate(self) -> None:
        if self.in_channels < 1 or self.base_width < 1:
            raise ConfigError("in_channels and base_width must be positive")
        if self.num_downsamples < 1:
            raise ConfigError("num_downsamples must be >= 1")
        if self.num_shared_blocks < 0:
            raise ConfigError("num_shared_blocks must be >= 0")
        if self.share_weights and self.num_shared_blocks < 1:
            raise ConfigError("share_weights requires num_shared_blocks >= 1")
        if self.patch_size < 1 or self.patch_size % (2 ** self.num_downsamples):
            raise ConfigError(
                f"patch_size {self.patch_size} not divisible by 2**{self.num_downsamples}"
            )

    @property
    def latent_size(self) -> int:
        return self.patch_size // 2 ** self.num_downsamples

    def widths(self) -> list[int]:
        """Channel count after each downsample; doubles, capped at 8x base."""
        return [self.base_width * min(2 ** i, 8) for i in range(self.num_downsamples)]

    @property
    def latent_channels(self) -> int:
        return self.widths()[-1]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LatentCode:
    features: torch.Tensor
    source_domain: Domain


def _norm(channels: int, enabled: bool) -> nn.Module:
    return nn.InstanceNorm2d(channels) if enabled else nn.Identity()


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, act: type[nn.Module], norm: bool):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, 1, 1, padding_mode="reflect"),
            _norm(channels, norm),
            act(),
            nn.Conv2d(channels, channels, 3, 1, 1, padding_mode="reflect"),
            _norm(channels, norm),
        )

    def forward(self, x):
        return x + self.body(x)


class _LeakyReLU(nn.LeakyReLU):
    def __init__(self):
        super().__init__(0.2)


def _down_stack(config: GeneratorConfig) -> nn.Sequential:
    layers = []
    c_in = config.in_channels
    for c_out in config.widths():
        layers += [
            nn.Conv2d(c_in, c_out, 4, 2, 1, padding_mode="reflect"),
            _norm(c_out, config.use_normalization),
            _LeakyReLU(),
        ]
        c_in = c_out
    return nn.Sequential(*layers)


def _up_stack(config: GeneratorConfig) -> nn.Sequential:
    """Nearest-neighbour upsample + stride-1 conv per level.

    The last level's conv emits the image directly: a rectifier after an
    upsample-conv at full resolution reintroduces period-2 stripes.
    """
    widths = config.widths()
    targets = widths[-2::-1]
    layers = []
    c_in = widths[-1]
    for c_out in targets:
        layers += [
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c_in, c_out, 3, 1, 1, padding_mode="reflect"),
            _norm(c_out, config.use_normalization),
            nn.ReLU(),
        ]
        c_in = c_out
    layers += [
        nn.Upsample(scale_factor=2, mode="nearest"),
        nn.Conv2d(c_in, config.in_channels, 3, 1, 1, padding_mode="reflect"),
        nn.Tanh(),
    ]
    return nn.Sequential(*layers)


def _shared_stack(config: GeneratorConfig, act: type[nn.Module]) -> nn.Sequential:
    c = config.latent_channels
    return nn.Sequential(
        *[ResidualBlock(c, act, config.use_normalization) for _ in range(config.num_shared_blocks)]
    )


class Encoder(nn.Module):
    def __init__(self, private: nn.Sequential, shared: nn.Sequential):
        super().__init__()
        self.private = private
        self.shared = shared

    def forward(self, x):
        return self.shared(self.private(x))


class Decoder(nn.Module):
    def __init__(self, shared: nn.Sequential, private: nn.Sequential):
        super().__init__()
        self.shared = shared
        self.private = private

    def forward(self, z):
        return self.private(self.shared(z))


class GeneratorPair(nn.Module):
    """Two generators (encoder + decoder per domain) over one latent space.

    Images are ``(N, C, H, W)`` tensors in ``[-1, 1]``.  Every forward path is a
    pure function of parameters and input; no noise is injected anywhere.
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        config.validate()
        self.config = config
        enc_shared = _shared_stack(config, _LeakyReLU)
        dec_shared = _shared_stack(config, nn.ReLU)
        if config.share_weights:
            enc_shared_b, dec_shared_b = enc_shared, dec_shared
        else:
            # untied copies start from identical values so ablations differ only by tying
            enc_shared_b, dec_shared_b = copy.deepcopy(enc_shared), copy.deepcopy(dec_shared)
        self.encoder_A = Encoder(_down_stack(config), enc_shared)
        self.encoder_B = Encoder(_down_stack(config), enc_shared_b)
        self.decoder_A = Decoder(dec_shared, _up_stack(config))
        self.decoder_B = Decoder(dec_shared_b, _up_stack(config))

    def encoder(self, domain) -> Encoder:
        return self.encoder_A if Domain(domain) is Domain.A else self.encoder_B

    def decoder(self, domain) -> Decoder:
        return self.decoder_A if Domain(domain) is Domain.A else self.decoder_B

    def _check_image(self, image: torch.Tensor) -> None:
        c, p = self.config.in_channels, self.config.patch_size
        if image.dim() != 4 or tuple(image.shape[1:]) != (c, p, p):
            raise DimensionError(f"expected image of shape (N, {c}, {p}, {p}), got {tuple(image.shape)}")

    def encode(self, domain, image: torch.Tensor) -> LatentCode:
        self._check_image(image)
        domain = Domain(domain)
        return LatentCode(self.encoder(domain)(image), domain)

    def decode(self, domain, latent: LatentCode | torch.Tensor) -> torch.Tensor:
        z = latent.features if isinstance(latent, LatentCode) else latent
        c, s = self.config.latent_channels, self.config.latent_size
        if z.dim() != 4 or tuple(z.shape[1:]) != (c, s, s):
            raise DimensionError(f"expected latent of shape (N, {c}, {s}, {s}), got {tuple(z.shape)}")
        return self.decoder(domain)(z)

    def reconstruct(self, domain, image: torch.Tensor) -> torch.Tensor:
        return self.decode(domain, self.encode(domain, image))

    def translate(self, src_domain, image: torch.Tensor) -> torch.Tensor:
        src = Domain(src_domain)
        return self.decode(src.other, self.encode(src, image))

    def cross_cycle(self, src_domain, image: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return ``(translated, recovered)`` along x -> Z_x -> x_hat -> Z_hat -> x_cc."""
        src = Domain(src_domain)
        translated = self.translate(src, image)
        recovered = self.decode(src, self.encode(src.other, translated))
        return translated, recovered

    def shared_modules(self) -> dict[str, tuple[nn.Module, nn.Module]]:
        return {
            "encoder": (self.encoder_A.shared, self.encoder_B.shared),
            "decoder": (self.decoder_A.shared, self.decoder_B.shared),
        }


def init_weights(module: nn.Module, generator: torch.Generator, std: float = 0.02) -> None:
    """Zero-mean normal init for every conv weight, zero biases. Shared tensors are hit once."""
    seen = set()
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)) and id(m) not in seen:
            seen.add(id(m))
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=generator) * std)
                if m.bias is not None:
                    m.bias.zero_()


def build_generator_pair(config: GeneratorConfig, seed: int) -> GeneratorPair:
    config.validate()
    pair = GeneratorPair(config)
    gen = torch.Generator().manual_seed(int(seed))
    if config.share_weights:
        init_weights(pair, gen)
    else:
        # initialise through the A-side, then mirror into the untied B copies
        init_weights(pair, gen)
        for a, b in pair.shared_modules().values():
            b.load_state_dict(a.state_dict())
    return pair


def count_strided_transposed_convs(module: nn.Module) -> int:
    return sum(
        1
        for m in module.modules()
        if isinstance(m, nn.ConvTranspose2d) and any(s > 1 for s in m.stride)
    )
