"""``pairtranslate`` command-line entrypoint.

Subcommands: synth, tile, train, translate, eval, ablate.  Every command that
writes outputs also writes the effective configuration next to them.

Exit status: 0 success, 1 usage/config error, 2 data integrity error,
3 numeric failure.  ``PAIRTRANSLATE_VERBOSITY`` (0 quiet, 1 info, 2 debug) sets logging.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from pairtranslate.config import ExperimentConfig, dump_config, load_config
from pairtranslate.data.grid import PairedScene, assign_region_split, compute_patch_grid, tile
from pairtranslate.data.imageio import denormalize, normalize, read_mask, read_png, write_png
from pairtranslate.data.manifest import read_manifest, write_manifest
from pairtranslate.errors import ConfigError, IntegrityError, PairTranslateError
from pairtranslate.eval import (
    evaluate_translation,
    format_table,
    identity_translator,
    pair_translator,
    write_report,
)
from pairtranslate.pipeline import ABLATION_AXES, fit_patch_size, format_ablation, run_ablation, synth_samples
from pairtranslate.trainer import init_state, load_checkpoint, train

log = logging.getLogger("pairtranslate")


class _Parser(argparse.ArgumentParser):
    # usage errors share the config-error status instead of argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _on_off(value: str) -> bool:
    v = value.lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


def _set_pair(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


# flag name -> dotted config key
_OVERRIDES = {
    "seed": ("train.seed", "synth.seed"),
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "lr": "train.learning_rate",
    "checkpoint_interval": "train.checkpoint_interval",
    "share_weights": "generator.share_weights",
    "depth": "generator.num_downsamples",
    "base_width": "generator.base_width",
    "disc_norm": "discriminator.use_normalization",
    "num_scenes": "data.num_scenes",
    "change_fraction": "synth.change_fraction",
    "scene_size": "synth.scene_size",
    "patch": "data.patch_size",
    "overlap": "data.overlap",
    "test_fraction": "data.test_fraction",
    "manifest": "data.manifest",
    "method": "eval.method",
}


def _add_config_args(p: argparse.ArgumentParser, *names: str) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--set", dest="sets", action="append", type=_set_pair, default=[],
                   metavar="KEY=VALUE", help="override any config key, e.g. train.epochs=5")
    kinds = {
        "seed": int, "epochs": int, "batch_size": int, "lr": float, "checkpoint_interval": int,
        "share_weights": _on_off, "depth": int, "base_width": int, "disc_norm": _on_off,
        "num_scenes": int, "change_fraction": float, "scene_size": int, "patch": int,
        "overlap": float, "test_fraction": float, "manifest": str, "method": yaml.safe_load,
    }
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=kinds[name], default=None)


def _effective_config(args) -> ExperimentConfig:
    overrides = dict(args.sets)
    for name, key in _OVERRIDES.items():
        value = getattr(args, name, None)
        if value is not None:
            for k in (key,) if isinstance(key, str) else key:
                overrides[k] = value
    return load_config(args.config, overrides)


def _load_image(path) -> np.ndarray:
    try:
        return read_png(path)
    except (FileNotFoundError, OSError) as exc:
        raise IntegrityError(f"cannot read image {path}: {exc}") from exc


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = _effective_config(args)
    cfg.validate()
    out = Path(args.out)
    samples = synth_samples(cfg)
    manifest = write_manifest(samples, out)
    dump_config(cfg, out / "config.yaml")
    print(f"wrote {len(manifest)} patches to {manifest.path}")
    return 0


def cmd_tile(args) -> int:
    a, b = _load_image(args.image_a), _load_image(args.image_b)
    mask = None
    if args.mask is not None:
        try:
            mask = read_mask(args.mask)
        except (FileNotFoundError, OSError) as exc:
            raise IntegrityError(f"cannot read mask {args.mask}: {exc}") from exc
    scene = PairedScene(a, b, mask, scene_id=args.scene_id)
    grid = compute_patch_grid(scene.height, scene.width, args.patch, args.overlap)
    samples = assign_region_split(tile(scene, grid), scene.height, args.test_fraction)
    out = Path(args.out)
    manifest = write_manifest(samples, out)
    (out / "tile.yaml").write_text(yaml.safe_dump({
        "image_a": str(args.image_a), "image_b": str(args.image_b),
        "mask": None if args.mask is None else str(args.mask),
        "patch": args.patch, "overlap": args.overlap, "test_fraction": args.test_fraction,
        "scene_id": args.scene_id,
    }, sort_keys=False))
    print(f"wrote {len(manifest)} patches to {manifest.path}")
    return 0


def cmd_train(args) -> int:
    cfg = _effective_config(args)
    if cfg.data.manifest is None:
        raise ConfigError("train needs a manifest (--manifest or data.manifest)")
    cfg.validate()
    manifest = read_manifest(cfg.data.manifest)
    samples = manifest.split("train").samples() or manifest.samples()
    if not samples:
        raise ConfigError(f"manifest {manifest.path} has no samples")
    cfg = fit_patch_size(cfg, samples)
    out = Path(args.out)
    state = None
    if args.resume:
        ckpt = out / "checkpoints" / "last.ckpt" if args.resume == "last" else Path(args.resume)
        state = load_checkpoint(ckpt)
        log.info("resuming from %s at epoch %d step %d", ckpt, state.epoch, state.step)
    dump_config(cfg, out / "config.yaml")
    if state is None:
        state = init_state(cfg.train, cfg.generator, cfg.discriminator)
    state = train(cfg.train, samples, out_dir=out, state=state)
    print(f"trained to epoch {state.epoch} (step {state.step}); checkpoints in {out / 'checkpoints'}")
    return 0


def cmd_translate(args) -> int:
    state = load_checkpoint(args.checkpoint)
    manifest = read_manifest(args.manifest).split(args.split)
    src = "A" if args.direction == "a2b" else "B"
    translator = pair_translator(state.generator, src)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = manifest.samples()
    for s in samples:
        write_png(out / f"{s.key}_{args.direction}.png", denormalize(translator(s)))
    (out / "translate.yaml").write_text(yaml.safe_dump({
        "checkpoint": str(args.checkpoint), "manifest": str(args.manifest),
        "direction": args.direction, "split": args.split,
    }, sort_keys=False))
    print(f"wrote {len(samples)} {args.direction} translations to {out}")
    return 0


def _dir_translator(directory: Path, direction: str):
    def run(sample):
        return normalize(_load_image(directory / f"{sample.key}_{direction}.png"))
    return run


def cmd_eval(args) -> int:
    if args.translated_dir is not None and args.checkpoint is not None:
        raise ConfigError("give at most one of --translated-dir and --checkpoint")
    manifest = read_manifest(args.manifest)
    split = args.split
    if split is None:
        split = "test" if any(r.split == "test" for r in manifest.records) else None
    samples = manifest.split(split).samples()
    method = yaml.safe_load(str(args.method))
    reports = [evaluate_translation(identity_translator, samples, method, name="base")]
    if args.checkpoint is not None:
        state = load_checkpoint(args.checkpoint)
        reports.append(evaluate_translation(state.generator, samples, method, name=args.name,
                                            direction=args.direction))
    elif args.translated_dir is not None:
        reports.append(evaluate_translation(_dir_translator(Path(args.translated_dir), args.direction),
                                            samples, method, name=args.name, direction=args.direction))
    out = Path(args.out)
    write_report(reports, out)
    (out / "eval.yaml").write_text(yaml.safe_dump({
        "manifest": str(args.manifest), "split": split, "method": method, "direction": args.direction,
        "checkpoint": None if args.checkpoint is None else str(args.checkpoint),
        "translated_dir": None if args.translated_dir is None else str(args.translated_dir),
    }, sort_keys=False))
    sys.stdout.write(format_table(reports))
    return 0


def cmd_ablate(args) -> int:
    cfg = _effective_config(args)
    cfg.validate()
    rows = run_ablation(cfg, args.axis, out_dir=args.out)
    dump_config(cfg, Path(args.out) / "config.yaml")
    sys.stdout.write(format_ablation(rows))
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pairtranslate", description="Paired-image translation for change detection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic bi-temporal dataset")
    _add_config_args(p, "seed", "num_scenes", "change_fraction", "scene_size", "patch", "overlap", "test_fraction")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tile", help="cut a co-registered image pair into overlapping patches")
    p.add_argument("--image-a", required=True, type=Path)
    p.add_argument("--image-b", required=True, type=Path)
    p.add_argument("--mask", type=Path)
    p.add_argument("--patch", type=int, default=256)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--test-fraction", type=float, default=0.0)
    p.add_argument("--scene-id", default="scene")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("train", help="train the generator pair and discriminators")
    _add_config_args(p, "manifest", "seed", "epochs", "batch_size", "lr", "checkpoint_interval",
                     "share_weights", "depth", "base_width", "disc_norm")
    p.add_argument("--resume", nargs="?", const="last", default=None,
                   help="checkpoint to resume from (default: OUT/checkpoints/last.ckpt)")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="translate manifest patches with a trained checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--direction", choices=("a2b", "b2a"), default="a2b")
    p.add_argument("--split", default=None)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("eval", help="change-detection metrics; Base protocol always included")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--translated-dir", type=Path)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--direction", choices=("a2b", "b2a"), default="a2b")
    p.add_argument("--split", default=None, help="default: test split if present, else all")
    p.add_argument("--method", default="otsu", help="'otsu' or a fixed threshold in [0, 2]")
    p.add_argument("--name", default="translated")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train variants along one axis and rank them by F1")
    _add_config_args(p, "manifest", "seed", "epochs", "batch_size", "num_scenes", "base_width")
    p.add_argument("--axis", required=True, choices=ABLATION_AXES)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_ablate)
    return parser


def _setup_logging() -> None:
    try:
        level = int(os.environ.get("PAIRTRANSLATE_VERBOSITY", "1"))
    except ValueError:
        level = 1
    logging.basicConfig(
        level={0: logging.WARNING, 1: logging.INFO}.get(level, logging.DEBUG),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PairTranslateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
