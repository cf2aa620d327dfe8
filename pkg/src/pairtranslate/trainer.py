"""Alternating adversarial training of the generator pair and both discriminators.

Per batch: one discriminator update on real pairs ``(A, B)``/``(B, A)`` against
detached fakes ``(A, B_hat)``/``(B, A_hat)``, then one generator update on the
weighted objective.  Both domains are processed in every step.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from pairtranslate.adversary import DiscriminatorConfig, MultiScaleDiscriminator, build_discriminator, score_pair
from pairtranslate.checkpoint import read_archive, write_archive
from pairtranslate.data.grid import PairedPatchSample
from pairtranslate.data.imageio import normalize, to_tensor
from pairtranslate.data.manifest import DatasetManifest
from pairtranslate.errors import ConfigError, IntegrityError, NumericError
from pairtranslate.losses import (
    LossReport,
    LossWeights,
    adversarial_loss_discriminator,
    adversarial_loss_generator,
    cross_cycle_loss,
    reconstruction_loss,
    weighted_total,
)
from pairtranslate.model import GeneratorConfig, GeneratorPair, build_generator_pair

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epochs: int = 200
    batch_size: int = 1
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_interval: int = 10
    lr_decay_start: int | None = None

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.checkpoint_interval < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1 and checkpoint_interval >= 1 required")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("loss_weights"), dict):
            d["loss_weights"] = LossWeights(**d["loss_weights"])
        return cls(**d)


def make_optimizer(params, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=config.learning_rate, betas=(config.beta1, config.beta2))


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Constant rate, or linear decay to zero from ``lr_decay_start`` to the last epoch."""
    start = config.lr_decay_start
    if start is None or epoch < start:
        return config.learning_rate
    span = max(config.epochs - start, 1)
    return config.learning_rate * max(0.0, 1.0 - (epoch - start) / span)


def derive_seeds(seed: int) -> dict[str, int]:
    """Expand one top-level seed into independent per-component seeds."""
    names = ("generator", "disc_A", "disc_B", "data")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


@dataclass
class TrainState:
    generator: GeneratorPair
    disc_A: MultiScaleDiscriminator  # conditioned on A, judges B candidates
    disc_B: MultiScaleDiscriminator  # conditioned on B, judges A candidates
    opt_G: torch.optim.Adam
    opt_D: torch.optim.Adam
    config: TrainConfig
    rng: np.random.Generator
    step: int = 0
    epoch: int = 0

    @property
    def generator_config(self) -> GeneratorConfig:
        return self.generator.config

    @property
    def discriminator_config(self) -> DiscriminatorConfig:
        return self.disc_A.config


def init_state(config: TrainConfig, gen_config: GeneratorConfig, disc_config: DiscriminatorConfig) -> TrainState:
    config.validate()
    seeds = derive_seeds(config.seed)
    pair = build_generator_pair(gen_config, seeds["generator"])
    disc_A = build_discriminator(disc_config, seeds["disc_A"])
    disc_B = build_discriminator(disc_config, seeds["disc_B"])
    return TrainState(
        generator=pair,
        disc_A=disc_A,
        disc_B=disc_B,
        opt_G=make_optimizer(pair.parameters(), config),
        opt_D=make_optimizer(list(disc_A.parameters()) + list(disc_B.parameters()), config),
        config=config,
        rng=np.random.default_rng(seeds["data"]),
    )


def samples_to_tensors(samples) -> tuple[torch.Tensor, torch.Tensor]:
    A = to_tensor(np.stack([normalize(s.image_A) for s in samples]))
    B = to_tensor(np.stack([normalize(s.image_B) for s in samples]))
    return A, B


def _check(name: str, value: torch.Tensor, step: int) -> float:
    v = float(value.detach())
    if not np.isfinite(v):
        raise NumericError(f"non-finite loss term {name}={v} at step {step}")
    return v


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def train_step(state: TrainState, batch) -> tuple[TrainState, LossReport]:
    """One discriminator update then one generator update.

    ``batch`` is a nonempty list of :class:`PairedPatchSample` or an ``(A, B)``
    pair of NCHW tensors in [-1, 1].  The state is updated in place and returned.
    """
    if isinstance(batch, (list, tuple)) and batch and isinstance(batch[0], PairedPatchSample):
        A, B = samples_to_tensors(batch)
    else:
        A, B = batch
    if A.shape[0] == 0:
        raise ConfigError("empty batch")
    G, dA, dB = state.generator, state.disc_A, state.disc_B
    w = state.config.loss_weights
    step = state.step + 1

    zA, zB = G.encode("A", A), G.encode("B", B)
    A_rec, B_rec = G.decode("A", zA), G.decode("B", zB)
    B_hat, A_hat = G.decode("B", zA), G.decode("A", zB)
    A_cc = G.decode("A", G.encode("B", B_hat))
    B_cc = G.decode("B", G.encode("A", A_hat))

    state.opt_D.zero_grad(set_to_none=True)
    d_A = adversarial_loss_discriminator(score_pair(dA, A, B), score_pair(dA, A, B_hat.detach()))
    d_B = adversarial_loss_discriminator(score_pair(dB, B, A), score_pair(dB, B, A_hat.detach()))
    report = LossReport(adv_disc_A=_check("adv_disc_A", d_A, step), adv_disc_B=_check("adv_disc_B", d_B, step))
    (d_A + d_B).backward()
    state.opt_D.step()

    _set_requires_grad(dA, False)
    _set_requires_grad(dB, False)
    try:
        terms = {
            "rec_A": reconstruction_loss(A_rec, A),
            "rec_B": reconstruction_loss(B_rec, B),
            "cc_A": cross_cycle_loss(A_cc, A),
            "cc_B": cross_cycle_loss(B_cc, B),
            "adv_gen_A": adversarial_loss_generator(score_pair(dA, A, B_hat)),
            "adv_gen_B": adversarial_loss_generator(score_pair(dB, B, A_hat)),
        }
        for name, value in terms.items():
            setattr(report, name, _check(name, value, step))
        total = weighted_total(**terms, weights=w)
        report.total_generator = _check("total_generator", total, step)
        state.opt_G.zero_grad(set_to_none=True)
        total.backward()
        state.opt_G.step()
    finally:
        _set_requires_grad(dA, True)
        _set_requires_grad(dB, True)

    report.total_discriminator = report.adv_disc_A + report.adv_disc_B
    state.step = step
    return state, report


class MetricsLog:
    """Append-only JSON-lines log: one ``{step, epoch, <LossReport fields>}`` per line."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, step: int, epoch: int, report: LossReport) -> None:
        with open(self.path, "a") as fh:
            fh.write(json.dumps({"step": step, "epoch": epoch, **report.to_dict()}) + "\n")

    def read(self) -> list[dict]:
        if not self.path.exists():
            return []
        return [json.loads(line) for line in self.path.read_text().splitlines() if line.strip()]


def train(
    config: TrainConfig,
    dataset,
    gen_config: GeneratorConfig | None = None,
    disc_config: DiscriminatorConfig | None = None,
    out_dir=None,
    state: TrainState | None = None,
) -> TrainState:
    """Run ``config.epochs`` epochs (continuing from ``state.epoch`` when resuming).

    ``dataset`` is a manifest (its ``train`` split is used) or a list of samples.
    With ``out_dir`` set, writes ``metrics.jsonl`` and ``checkpoints/``.
    """
    samples = dataset.split("train").samples() if isinstance(dataset, DatasetManifest) else list(dataset)
    if not samples:
        raise ConfigError("dataset is empty")
    if state is None:
        state = init_state(config, gen_config or GeneratorConfig(), disc_config or DiscriminatorConfig())
    else:
        state.config = config
        config.validate()
    A_all, B_all = samples_to_tensors(samples)
    n = len(samples)
    out = Path(out_dir) if out_dir is not None else None
    metrics = MetricsLog(out / "metrics.jsonl") if out is not None else None

    while state.epoch < config.epochs:
        lr = lr_at_epoch(config, state.epoch)
        for opt in (state.opt_G, state.opt_D):
            for group in opt.param_groups:
                group["lr"] = lr
        order = state.rng.permutation(n)
        last = None
        for i in range(0, n, config.batch_size):
            idx = torch.from_numpy(order[i:i + config.batch_size])
            state, last = train_step(state, (A_all[idx], B_all[idx]))
            if metrics is not None:
                metrics.write(state.step, state.epoch, last)
        state.epoch += 1
        log.info("epoch %d/%d step %d %s", state.epoch, config.epochs, state.step,
                 {k: round(v, 4) for k, v in last.to_dict().items()})
        if out is not None and (state.epoch % config.checkpoint_interval == 0 or state.epoch == config.epochs):
            save_checkpoint(state, out / "checkpoints" / f"epoch_{state.epoch:04d}.ckpt")
            save_checkpoint(state, out / "checkpoints" / "last.ckpt")
    return state


def save_checkpoint(state: TrainState, path) -> None:
    tree = {
        "step": state.step,
        "epoch": state.epoch,
        "train_config": state.config.to_dict(),
        "generator_config": state.generator_config.to_dict(),
        "discriminator_config": state.discriminator_config.to_dict(),
        "generator": state.generator.state_dict(),
        "disc_A": state.disc_A.state_dict(),
        "disc_B": state.disc_B.state_dict(),
        "opt_G": state.opt_G.state_dict(),
        "opt_D": state.opt_D.state_dict(),
        "rng": state.rng.bit_generator.state,
    }
    write_archive(tree, path)


def load_checkpoint(path) -> TrainState:
    tree = read_archive(path)
    try:
        config = TrainConfig.from_dict(tree["train_config"])
        gen_config = GeneratorConfig(**tree["generator_config"])
        disc_config = DiscriminatorConfig(**tree["discriminator_config"])
        state = init_state(config, gen_config, disc_config)
        state.generator.load_state_dict(tree["generator"])
        state.disc_A.load_state_dict(tree["disc_A"])
        state.disc_B.load_state_dict(tree["disc_B"])
        state.opt_G.load_state_dict(tree["opt_G"])
        state.opt_D.load_state_dict(tree["opt_D"])
        state.rng.bit_generator.state = tree["rng"]
    except (KeyError, TypeError, RuntimeError, ValueError) as exc:
        raise IntegrityError(f"{path}: inconsistent checkpoint contents ({exc})") from exc
    state.step, state.epoch = int(tree["step"]), int(tree["epoch"])
    return state


def shared_parameter_checksum(pair: GeneratorPair) -> str:
    """SHA-256 over the encoder-A and decoder-A shared block parameters."""
    h = hashlib.sha256()
    for mod in (pair.encoder_A.shared, pair.decoder_A.shared):
        for p in mod.parameters():
            h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()
