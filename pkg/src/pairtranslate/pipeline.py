"""End-to-end runs: synthesize or load data, train, evaluate, compare variants."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

from pairtranslate.config import ExperimentConfig, dump_config
from pairtranslate.data.grid import PairedPatchSample, compute_patch_grid, tile
from pairtranslate.data.manifest import DatasetManifest, read_manifest
from pairtranslate.data.synth import generate_scenes
from pairtranslate.errors import ConfigError, DimensionError
from pairtranslate.eval import EvalReport, evaluate_translation, format_table, identity_translator, write_report
from pairtranslate.trainer import TrainState, init_state, shared_parameter_checksum, train

log = logging.getLogger(__name__)

ABLATION_AXES = ("share_weights", "disc_norm", "depth")


def synth_samples(cfg: ExperimentConfig) -> list[PairedPatchSample]:
    """Generate ``data.num_scenes`` scenes and tile them; the last ``test_fraction``
    of scenes (by index) form the test split, so no scene is in both splits."""
    scenes = generate_scenes(cfg.synth, cfg.data.num_scenes)
    size = cfg.synth.scene_size
    grid = compute_patch_grid(size, size, cfg.data.patch_size, cfg.data.overlap)
    n_test = int(round(len(scenes) * cfg.data.test_fraction))
    samples = []
    for i, scene in enumerate(scenes):
        split = "test" if i >= len(scenes) - n_test else "train"
        for s in tile(scene, grid):
            s.split = split
            samples.append(s)
    return samples


def load_samples(cfg: ExperimentConfig) -> list[PairedPatchSample]:
    if cfg.data.manifest is not None:
        return read_manifest(cfg.data.manifest).samples()
    return synth_samples(cfg)


def split_samples(samples, name: str) -> list[PairedPatchSample]:
    return [s for s in samples if s.split == name]


def evaluation_split(samples) -> list[PairedPatchSample]:
    """Test patches if there are any, otherwise everything."""
    return split_samples(samples, "test") or list(samples)


def fit_patch_size(cfg: ExperimentConfig, samples) -> ExperimentConfig:
    """The generator's patch size is a property of the data: adopt it from the patches."""
    sizes = {s.image_A.shape[0] for s in samples} | {s.image_A.shape[1] for s in samples}
    if len(sizes) != 1:
        raise DimensionError(f"patches must be square and equally sized, found sizes {sorted(sizes)}")
    size = sizes.pop()
    if cfg.generator.patch_size != size:
        log.info("generator.patch_size %d -> %d (from data)", cfg.generator.patch_size, size)
        cfg = replace(cfg, generator=replace(cfg.generator, patch_size=size))
    return cfg


@dataclass
class RunResult:
    state: TrainState
    base: EvalReport
    translated: EvalReport

    @property
    def table(self) -> str:
        return format_table([self.base, self.translated])

    @property
    def shared_checksum(self) -> str:
        return shared_parameter_checksum(self.state.generator)


def run_experiment(cfg: ExperimentConfig, samples=None, out_dir=None, name: str = "translated") -> RunResult:
    """Train on the ``train`` split and evaluate A->B translation and the Base protocol."""
    cfg.validate()
    if samples is None:
        samples = load_samples(cfg)
    if isinstance(samples, DatasetManifest):
        samples = samples.samples()
    cfg = fit_patch_size(cfg, samples)
    train_set = split_samples(samples, "train")
    if not train_set:
        raise ConfigError("no training samples")
    eval_set = evaluation_split(samples)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        dump_config(cfg, out / "config.yaml")
    state = init_state(cfg.train, cfg.generator, cfg.discriminator)
    state = train(cfg.train, train_set, out_dir=out, state=state)
    base = evaluate_translation(identity_translator, eval_set, cfg.eval.method, name="base")
    translated = evaluate_translation(state.generator, eval_set, cfg.eval.method, name=name)
    if out is not None:
        write_report([base, translated], out)
    return RunResult(state, base, translated)


def ablation_variants(cfg: ExperimentConfig, axis: str) -> dict[str, ExperimentConfig]:
    if axis == "share_weights":
        return {
            f"share_weights={'on' if v else 'off'}": replace(cfg, generator=replace(cfg.generator, share_weights=v))
            for v in (True, False)
        }
    if axis == "disc_norm":
        return {
            f"disc_norm={'on' if v else 'off'}": replace(cfg, discriminator=replace(cfg.discriminator, use_normalization=v))
            for v in (False, True)
        }
    if axis == "depth":
        return {
            f"depth={d}": replace(cfg, generator=replace(cfg.generator, num_downsamples=d))
            for d in (3, 4, 5)
        }
    raise ConfigError(f"unknown ablation axis {axis!r}; expected one of {ABLATION_AXES}")


ABLATION_COLUMNS = ("rank", "variant", "f1", "miou", "tv", "base_f1", "shared_checksum")


def run_ablation(cfg: ExperimentConfig, axis: str, out_dir=None, samples=None) -> list[dict]:
    """Train every variant on the same data and return rows ranked by F1 (best first)."""
    variants = ablation_variants(cfg, axis)
    if samples is None:
        samples = load_samples(cfg)
    rows = []
    for label, vcfg in variants.items():
        log.info("ablation %s: %s", axis, label)
        sub = None if out_dir is None else Path(out_dir) / label.replace("=", "_")
        res = run_experiment(vcfg, samples, sub, name=label)
        rows.append({
            "variant": label,
            "f1": res.translated.metrics.f1,
            "miou": res.translated.metrics.miou,
            "tv": res.translated.mean_tv,
            "base_f1": res.base.metrics.f1,
            "shared_checksum": res.shared_checksum,
        })
    rows.sort(key=lambda r: -r["f1"])
    for i, r in enumerate(rows, 1):
        r["rank"] = i
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "ablation.tsv").write_text(format_ablation(rows))
    return rows


def format_ablation(rows: list[dict]) -> str:
    lines = ["\t".join(ABLATION_COLUMNS)]
    for r in rows:
        lines.append("\t".join(
            f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in ABLATION_COLUMNS
        ))
    return "\n".join(lines) + "\n"
