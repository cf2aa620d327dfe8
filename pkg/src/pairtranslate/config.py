"""Experiment configuration: one YAML file with a section per component.

::

    train:         {learning_rate, beta1, beta2, epochs, batch_size, seed, ...}
    generator:     {base_width, num_downsamples, share_weights, ...}
    discriminator: {num_scales, layers_per_scale, base_width, use_normalization}
    synth:         {scene_size, change_fraction, ...}
    data:          {manifest, num_scenes, patch_size, overlap, test_fraction}
    eval:          {method}

Missing keys keep their defaults; unknown keys are rejected.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from pairtranslate.adversary import DiscriminatorConfig
from pairtranslate.data.synth import SynthConfig
from pairtranslate.errors import ConfigError
from pairtranslate.losses import LossWeights
from pairtranslate.model import GeneratorConfig
from pairtranslate.trainer import TrainConfig


@dataclass
class DataConfig:
    manifest: str | None = None
    num_scenes: int = 100
    patch_size: int = 64
    overlap: float = 0.0
    test_fraction: float = 0.2


@dataclass
class EvalConfig:
    method: str | float = "otsu"


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        self.train.validate()
        self.generator.validate()
        self.discriminator.validate()
        self.synth.validate()
        if not 0 <= self.data.test_fraction < 1:
            raise ConfigError("data.test_fraction must be in [0, 1)")
        if self.data.num_scenes < 1:
            raise ConfigError("data.num_scenes must be >= 1")
        if self.data.manifest is not None and not Path(self.data.manifest).exists():
            raise ConfigError(f"data.manifest not found: {self.data.manifest}")
        m = self.eval.method
        if not (m == "otsu" or isinstance(m, (int, float))):
            raise ConfigError(f"eval.method must be 'otsu' or a number, got {m!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict | None) -> "ExperimentConfig":
        cfg = cls()
        for section, values in (raw or {}).items():
            if not hasattr(cfg, section):
                raise ConfigError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise ConfigError(f"config section {section!r} must be a mapping")
            setattr(cfg, section, _update(getattr(cfg, section), values, section))
        return cfg

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Apply ``{"section.key[.sub]": value}`` overrides; returns a new config."""
        raw = self.to_dict()
        for dotted, value in overrides.items():
            parts = dotted.split(".")
            node = raw
            for p in parts[:-1]:
                if not isinstance(node, dict) or p not in node:
                    raise ConfigError(f"unknown config key {dotted!r}")
                node = node[p]
            if not isinstance(node, dict) or parts[-1] not in node:
                raise ConfigError(f"unknown config key {dotted!r}")
            node[parts[-1]] = value
        return ExperimentConfig.from_dict(raw)


def _update(obj, values: dict, where: str):
    known = {f.name for f in fields(obj)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    values = copy.deepcopy(values)
    if isinstance(obj, TrainConfig) and isinstance(values.get("loss_weights"), dict):
        values["loss_weights"] = _update(obj.loss_weights, values["loss_weights"], f"{where}.loss_weights")
    try:
        return replace(obj, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid values in {where}: {exc}") from exc


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    cfg = ExperimentConfig.from_dict(raw)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def dump_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    return path


def toy_config(seed: int = 0, share_weights: bool = True) -> ExperimentConfig:
    """Small-scale setting that trains on a desktop CPU in minutes: 64 px patches,
    three downsamplings, narrow networks, 100 synthetic scenes."""
    return ExperimentConfig(
        train=TrainConfig(epochs=30, batch_size=4, seed=seed, loss_weights=LossWeights()),
        generator=GeneratorConfig(base_width=16, num_downsamples=3, patch_size=64, share_weights=share_weights),
        discriminator=DiscriminatorConfig(base_width=16, layers_per_scale=3),
        synth=SynthConfig(scene_size=64, change_fraction=0.1, seed=seed),
        data=DataConfig(num_scenes=100, patch_size=64, overlap=0.0, test_fraction=0.2),
    )
