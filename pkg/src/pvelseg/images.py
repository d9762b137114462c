"""Grayscale image primitives: I/O, resizing, normalization, augmentation, splits.

Images are 2-D float64 arrays indexed [row, col]. Raw-scale images hold values
in [0, 255]; unit-scale images hold values in [0, 1]. Binary masks are 2-D bool
arrays of the same layout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as _PilImage
from PIL import UnidentifiedImageError

log = logging.getLogger(__name__)

# Smallest width/height accepted by pipeline entry points (training, inference).
MIN_PIPELINE_SIZE = 8


class ImageFormatError(ValueError):
    """Raised when a raster file exists but cannot be decoded as 8-bit grayscale."""


def require_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate that img is a 2-D float array and return it."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


def require_mask(mask: np.ndarray, name: str = "mask") -> np.ndarray:
    """Validate that mask is a 2-D bool array and return it."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype != np.bool_:
        raise ValueError(f"{name} must be bool, got dtype {arr.dtype}")
    return arr


def load_grayscale(path: str | Path) -> np.ndarray:
    """Load a PNG or PGM file as a raw-scale image (float64 in [0, 255]).

    RGB inputs are converted to luma. 16-bit or float rasters are rejected.
    """
    path = Path(path)
    try:
        with _PilImage.open(path) as im:
            if im.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise ImageFormatError(f"{path}: unsupported bit depth (mode {im.mode})")
            if im.mode != "L":
                im = im.convert("L")
            arr = np.asarray(im, dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable image: {exc}") from exc
    if arr.ndim != 2:
        raise ImageFormatError(f"{path}: expected a single-channel raster")
    return arr


def save_png(img: np.ndarray, path: str | Path) -> None:
    """Write a unit-scale image ([0, 1]) as an 8-bit grayscale PNG."""
    img = require_image(img)
    quant = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    _PilImage.fromarray(quant, mode="L").save(Path(path), format="PNG")


def save_mask_png(mask: np.ndarray, path: str | Path) -> None:
    """Write a binary mask as an 8-bit PNG (0 background, 255 foreground)."""
    mask = require_mask(mask)
    _PilImage.fromarray(mask.astype(np.uint8) * 255, mode="L").save(Path(path), format="PNG")


def load_mask_png(path: str | Path) -> np.ndarray:
    """Load a mask PNG written by save_mask_png; nonzero pixels are foreground."""
    return load_grayscale(path) > 127.5


def resize(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize with center-aligned sampling and edge clamping.

    Sample positions map output pixel centers onto input pixel centers, so a
    same-size resize reproduces the input exactly and constant images stay
    constant at any size.
    """
    img = require_image(img)
    if width < 1 or height < 1:
        raise ValueError(f"target size must be positive, got {width}x{height}")

    def axis_coords(n_out: int, n_in: int):
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    in_h, in_w = img.shape
    row_lo, row_hi, ty = axis_coords(height, in_h)
    rows = img[row_lo] + ty[:, None] * (img[row_hi] - img[row_lo])
    col_lo, col_hi, tx = axis_coords(width, in_w)
    return rows[:, col_lo] + tx[None, :] * (rows[:, col_hi] - rows[:, col_lo])


def normalize_contrast(img: np.ndarray, full_scale: float = 255.0) -> np.ndarray:
    """Min-max stretch to [0, full_scale]; constant images are returned unchanged."""
    img = require_image(img)
    lo = float(img.min())
    hi = float(img.max())
    if hi == lo:
        return img.copy()
    return (img - lo) * (full_scale / (hi - lo))


def rescale_unit(img: np.ndarray) -> np.ndarray:
    """Map a raw-scale image ([0, 255]) to unit scale by dividing by 255.

    Out-of-range inputs are clamped first and a warning is logged.
    """
    img = require_image(img)
    if img.min() < 0.0 or img.max() > 255.0:
        log.warning("rescale_unit: clamping values outside [0, 255]")
        img = np.clip(img, 0.0, 255.0)
    return img / 255.0


def augment(img: np.ndarray) -> list[np.ndarray]:
    """Return [original, horizontal flip, vertical flip, 180-degree rotation]."""
    img = require_image(img)
    return [img.copy(), np.fliplr(img).copy(), np.flipud(img).copy(),
            np.flipud(np.fliplr(img)).copy()]


@dataclass
class DatasetSplit:
    """Disjoint train/validation partition of an image list."""

    train: list[np.ndarray]
    validation: list[np.ndarray]
    split_fraction: float
    train_indices: list[int] = field(default_factory=list)
    validation_indices: list[int] = field(default_factory=list)


def split_dataset(images: list[np.ndarray], fraction: float, seed: int) -> DatasetSplit:
    """Shuffle images with the given seed and split; |train| = floor(fraction*n + 0.5)."""
    if not images:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(images)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(fraction * n + 0.5))
    train_idx = [int(i) for i in order[:n_train]]
    val_idx = [int(i) for i in order[n_train:]]
    return DatasetSplit(
        train=[images[i] for i in train_idx],
        validation=[images[i] for i in val_idx],
        split_fraction=fraction,
        train_indices=train_idx,
        validation_indices=val_idx,
    )


def write_manifest(paths: list[str], manifest_path: str | Path) -> None:
    """Write a newline-separated list of relative image paths."""
    text = "".join(p + "\n" for p in paths)
    Path(manifest_path).write_text(text, encoding="utf-8")


def read_manifest(manifest_path: str | Path) -> list[str]:
    """Read a newline-separated manifest, skipping blank lines."""
    lines = Path(manifest_path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip()]


def preprocess(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Standard entry pipeline: resize, contrast-normalize, rescale to unit."""
    img = require_image(img)
    if width < MIN_PIPELINE_SIZE or height < MIN_PIPELINE_SIZE:
        raise ValueError(f"pipeline images must be at least "
                         f"{MIN_PIPELINE_SIZE}x{MIN_PIPELINE_SIZE}, got {width}x{height}")
    return rescale_unit(normalize_contrast(resize(img, width, height)))
