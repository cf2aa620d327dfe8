"""Value-range conversions and lossless image files."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image


def normalize(image: np.ndarray) -> np.ndarray:
    """Affine map of 8-bit values [0, 255] onto [-1, 1] (float32)."""
    return image.astype(np.float32) / 127.5 - 1.0


def denormalize(image) -> np.ndarray:
    """Inverse of :func:`normalize`, rounded and clipped back to uint8."""
    arr = np.asarray(image, dtype=np.float64)
    return np.clip(np.rint((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)


def to_tensor(images) -> torch.Tensor:
    """HWC float array (or a list of them) in [-1, 1] -> NCHW float32 tensor."""
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


def to_images(tensor: torch.Tensor) -> np.ndarray:
    """NCHW tensor -> NHWC float array."""
    return tensor.detach().cpu().numpy().transpose(0, 2, 3, 1)


def write_png(path, array: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im)


def write_mask(path, mask: np.ndarray) -> None:
    write_png(path, (np.asarray(mask) > 0).astype(np.uint8) * 255)


def read_mask(path) -> np.ndarray:
    return (read_png(path) > 127).astype(np.uint8)
