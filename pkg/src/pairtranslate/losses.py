"""Objective terms: L1 reconstruction, L1 cross-cycle, and conditional adversarial losses.

The adversarial terms work on raw logits.  ``-log(sigmoid(x))`` is computed as
``softplus(-x)`` and ``-log(1 - sigmoid(x))`` as ``softplus(x)``.  Multi-scale
scores are reduced by an unweighted mean over scales of per-map means.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import torch
import torch.nn.functional as F

from pairtranslate.errors import ConfigError, DimensionError, NumericError


@dataclass
class LossWeights:
    lambda_cc: float = 100.0
    lambda_rec: float = 100.0

    def __post_init__(self):
        if self.lambda_cc < 0 or self.lambda_rec < 0:
            raise ConfigError("loss weights must be nonnegative")


@dataclass
class LossReport:
    rec_A: float = 0.0
    rec_B: float = 0.0
    cc_A: float = 0.0
    cc_B: float = 0.0
    adv_gen_A: float = 0.0
    adv_gen_B: float = 0.0
    adv_disc_A: float = 0.0
    adv_disc_B: float = 0.0
    total_generator: float = 0.0
    total_discriminator: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def check_finite(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss term {f.name}={value}")


def reconstruction_loss(x_rec: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    if x_rec.shape != x.shape:
        raise DimensionError(f"shape mismatch {tuple(x_rec.shape)} vs {tuple(x.shape)}")
    return (x_rec - x).abs().mean()


def cross_cycle_loss(x_cc: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    # same functional form; only the producing path differs
    return reconstruction_loss(x_cc, x)


def adversarial_loss_discriminator(real_scores, fake_scores) -> torch.Tensor:
    if len(real_scores) != len(fake_scores):
        raise DimensionError(f"scale count mismatch {len(real_scores)} vs {len(fake_scores)}")
    if not real_scores:
        raise DimensionError("empty score list")
    terms = [F.softplus(-r).mean() + F.softplus(f).mean() for r, f in zip(real_scores, fake_scores)]
    return torch.stack(terms).mean()


def adversarial_loss_generator(fake_scores) -> torch.Tensor:
    if not fake_scores:
        raise DimensionError("empty score list")
    return torch.stack([F.softplus(-f).mean() for f in fake_scores]).mean()


def weighted_total(rec_A, rec_B, cc_A, cc_B, adv_gen_A, adv_gen_B, weights: LossWeights):
    """Generator objective; works on floats and on tensors alike."""
    return (
        adv_gen_A
        + adv_gen_B
        + weights.lambda_cc * (cc_A + cc_B)
        + weights.lambda_rec * (rec_A + rec_B)
    )


def total_generator_objective(report: LossReport, weights: LossWeights) -> float:
    names = ("rec_A", "rec_B", "cc_A", "cc_B", "adv_gen_A", "adv_gen_B")
    for name in names:
        value = getattr(report, name)
        if not math.isfinite(value):
            raise NumericError(f"non-finite loss term {name}={value}")
    return weighted_total(*(getattr(report, n) for n in names), weights)
