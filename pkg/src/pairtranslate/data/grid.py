"""Paired scenes and overlapping patch grids."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from pairtranslate.errors import ConfigError, DimensionError


@dataclass
class PairedScene:
    """Co-registered ``H x W x C`` uint8 rasters with an optional ``H x W`` change mask.

    ``labels_A``/``labels_B`` are per-pixel class maps; only synthetic scenes have them.
    """

    image_A: np.ndarray
    image_B: np.ndarray
    change_mask: np.ndarray | None = None
    labels_A: np.ndarray | None = None
    labels_B: np.ndarray | None = None
    scene_id: str = "scene"

    def __post_init__(self):
        if self.image_A.shape != self.image_B.shape:
            raise DimensionError(
                f"image_A {self.image_A.shape} and image_B {self.image_B.shape} differ"
            )
        hw = self.image_A.shape[:2]
        for name in ("change_mask", "labels_A", "labels_B"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != hw:
                raise DimensionError(f"{name} {arr.shape} does not match images {hw}")

    @property
    def height(self) -> int:
        return self.image_A.shape[0]

    @property
    def width(self) -> int:
        return self.image_A.shape[1]


@dataclass
class PairedPatchSample:
    scene_id: str
    anchor: tuple[int, int]
    image_A: np.ndarray
    image_B: np.ndarray
    mask: np.ndarray | None = None
    split: str = "train"

    @property
    def key(self) -> str:
        return f"{self.scene_id}_r{self.anchor[0]}_c{self.anchor[1]}"


@dataclass
class PatchGrid:
    patch_size: int
    stride: int
    anchors: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.anchors)


def axis_anchors(dim: int, patch_size: int, stride: int) -> list[int]:
    n = math.ceil((dim - patch_size) / stride) + 1
    return [min(i * stride, dim - patch_size) for i in range(n)]


def compute_patch_grid(height: int, width: int, patch_size: int, overlap: float) -> PatchGrid:
    """Row-major top-left anchors; the last anchor on each axis is clamped to the edge.

    >>> len(compute_patch_grid(2700, 4725, 256, 0.5))
    756
    """
    if not 0 <= overlap < 1:
        raise ConfigError(f"overlap must be in [0, 1), got {overlap}")
    if patch_size < 1:
        raise ConfigError("patch_size must be positive")
    if patch_size > min(height, width):
        raise DimensionError(f"patch {patch_size} larger than image {height}x{width}")
    stride = max(1, int(round(patch_size * (1 - overlap))))
    rows = axis_anchors(height, patch_size, stride)
    cols = axis_anchors(width, patch_size, stride)
    return PatchGrid(patch_size, stride, [(r, c) for r in rows for c in cols])


def tile(scene: PairedScene, grid: PatchGrid) -> list[PairedPatchSample]:
    p = grid.patch_size
    samples = []
    for r, c in grid.anchors:
        if r < 0 or c < 0 or r + p > scene.height or c + p > scene.width:
            raise DimensionError(f"anchor {(r, c)} + {p} outside scene {scene.height}x{scene.width}")
        mask = None if scene.change_mask is None else scene.change_mask[r:r + p, c:c + p].copy()
        samples.append(
            PairedPatchSample(
                scene.scene_id,
                (r, c),
                scene.image_A[r:r + p, c:c + p].copy(),
                scene.image_B[r:r + p, c:c + p].copy(),
                mask,
            )
        )
    return samples


def assign_region_split(samples: list[PairedPatchSample], height: int, test_fraction: float) -> list[PairedPatchSample]:
    """Spatially disjoint split: patches fully below the cut row are test, fully above are
    train, and patches straddling the cut are dropped."""
    if test_fraction <= 0:
        return samples
    cut = int(round(height * (1 - test_fraction)))
    kept = []
    for s in samples:
        p = s.image_A.shape[0]
        if s.anchor[0] >= cut:
            s.split = "test"
        elif s.anchor[0] + p <= cut:
            s.split = "train"
        else:
            continue
        kept.append(s)
    return kept
