"""Procedural bi-temporal scenes with known semantic changes.

A scene is a background class overlaid with rectangles and ellipses of other
land-cover classes.  Both dates share one layout; the B date is rendered with a
different palette (the "season") and a subset of shapes is removed, re-classed
or added.  The change mask is exactly ``labels_A != labels_B``, so palette
differences never count as change.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from pairtranslate.data.grid import PairedScene
from pairtranslate.errors import ConfigError, GenerationError

# vegetation, bare soil, water, built-up; pairwise mean channel gap >= 65 within each palette
SUMMER_PALETTE = [(60, 130, 50), (200, 150, 90), (20, 50, 150), (230, 230, 235)]
WINTER_PALETTE = [(240, 240, 245), (140, 140, 145), (30, 35, 60), (200, 60, 50)]


@dataclass
class SynthConfig:
    scene_size: int = 64
    num_shapes: int = 12
    palette_A: list = field(default_factory=lambda: [list(c) for c in SUMMER_PALETTE])
    palette_B: list = field(default_factory=lambda: [list(c) for c in WINTER_PALETTE])
    texture_noise: float = 6.0
    change_fraction: float = 0.1
    seed: int = 0
    min_shape_frac: float = 0.1
    max_shape_frac: float = 0.35

    def validate(self) -> None:
        if not 0 <= self.change_fraction <= 1:
            raise ConfigError(f"change_fraction must be in [0, 1], got {self.change_fraction}")
        if len(self.palette_A) != len(self.palette_B) or len(self.palette_A) < 2:
            raise ConfigError("palettes must have equal length >= 2")
        if self.scene_size < 4 or self.num_shapes < 0 or self.texture_noise < 0:
            raise ConfigError("invalid scene_size / num_shapes / texture_noise")

    @property
    def num_classes(self) -> int:
        return len(self.palette_A)


@dataclass
class Shape:
    kind: str  # "rect" | "ellipse"
    cy: float
    cx: float
    hy: float
    hx: float
    cls: int

    def mask(self, size: int) -> np.ndarray:
        yy, xx = np.mgrid[0:size, 0:size]
        dy, dx = (yy + 0.5 - self.cy) / self.hy, (xx + 0.5 - self.cx) / self.hx
        if self.kind == "rect":
            return (np.abs(dy) <= 1) & (np.abs(dx) <= 1)
        return dy * dy + dx * dx <= 1


def _random_shape(rng: np.random.Generator, cfg: SynthConfig) -> Shape:
    s = cfg.scene_size
    hy, hx = rng.uniform(cfg.min_shape_frac, cfg.max_shape_frac, size=2) * s / 2
    return Shape(
        kind="rect" if rng.random() < 0.5 else "ellipse",
        cy=rng.uniform(0, s),
        cx=rng.uniform(0, s),
        hy=max(hy, 1.0),
        hx=max(hx, 1.0),
        cls=int(rng.integers(1, cfg.num_classes)),
    )


def rasterize(shapes: list[Shape], size: int, background: int = 0) -> np.ndarray:
    labels = np.full((size, size), background, dtype=np.uint8)
    for shape in shapes:
        labels[shape.mask(size)] = shape.cls
    return labels


def render(labels: np.ndarray, palette, texture_noise: float, rng: np.random.Generator) -> np.ndarray:
    """Paint a label map with ``palette`` plus i.i.d. Gaussian texture noise (8-bit units)."""
    colors = np.asarray(palette, dtype=np.float64)[labels]
    if texture_noise > 0:
        colors = colors + rng.normal(0.0, texture_noise, size=colors.shape)
    return np.clip(np.rint(colors), 0, 255).astype(np.uint8)


def _mutate(shapes: list[Shape], rng: np.random.Generator, cfg: SynthConfig, budget_new: int):
    """Apply one random remove/re-class/add edit; returns (new shapes, used an add)."""
    ops = []
    if shapes:
        ops += ["remove", "reclass"]
    if budget_new > 0:
        ops.append("add")
    if not ops:
        return None, False
    op = ops[int(rng.integers(len(ops)))]
    out = list(shapes)
    if op == "remove":
        del out[int(rng.integers(len(out)))]
    elif op == "reclass":
        i = int(rng.integers(len(out)))
        choices = [c for c in range(cfg.num_classes) if c != out[i].cls]
        out[i] = replace(out[i], cls=int(rng.choice(choices)))
    else:
        out.append(_random_shape(rng, cfg))
    return out, op == "add"


def generate_synthetic_pair(config: SynthConfig, scene_id: str = "scene", max_attempts: int = 500) -> PairedScene:
    config.validate()
    rng = np.random.default_rng(config.seed)
    size = config.scene_size
    shapes_A = [_random_shape(rng, config) for _ in range(config.num_shapes)]
    labels_A = rasterize(shapes_A, size)

    target = config.change_fraction
    slack = max(0.2 * target, 1.0 / (size * size))
    shapes_B, labels_B = list(shapes_A), labels_A.copy()
    frac = 0.0
    adds_left = config.num_shapes
    attempts = 0
    while target > 0 and frac < target - slack:
        attempts += 1
        if attempts > max_attempts:
            raise GenerationError(
                f"change_fraction {target} unreachable with num_shapes={config.num_shapes} "
                f"(reached {frac:.3f})"
            )
        cand, used_add = _mutate(shapes_B, rng, config, adds_left)
        if cand is None:
            raise GenerationError(f"change_fraction {target} unreachable with num_shapes=0")
        cand_labels = rasterize(cand, size)
        cand_frac = float((cand_labels != labels_A).mean())
        if cand_frac <= target + slack and cand_frac > frac:
            shapes_B, labels_B, frac = cand, cand_labels, cand_frac
            adds_left -= int(used_add)

    image_A = render(labels_A, config.palette_A, config.texture_noise, rng)
    image_B = render(labels_B, config.palette_B, config.texture_noise, rng)
    mask = (labels_A != labels_B).astype(np.uint8)
    return PairedScene(image_A, image_B, mask, labels_A, labels_B, scene_id=scene_id)


def scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def generate_scenes(config: SynthConfig, num_scenes: int) -> list[PairedScene]:
    return [
        generate_synthetic_pair(replace(config, seed=scene_seed(config.seed, i)), scene_id=f"s{i:04d}")
        for i in range(num_scenes)
    ]
