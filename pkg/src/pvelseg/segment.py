"""Disparity thresholding and structural noise removal.

Turns an SSIM disparity map into a binary defect mask: global Otsu and local
adaptive-mean thresholds, combined, then cleaned of busbar bands and border
pixels that a reconstruction never matches well.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .images import require_image, require_mask

log = logging.getLogger(__name__)

OTSU_BINS = 256


@dataclass(frozen=True)
class ThresholdConfig:
    """Knobs for the adaptive-mean threshold and mask combination.

    adaptive_c is expressed on the 0..255 intensity scale and divided by 255
    when applied to unit-scale maps. combine_mode is 'union' or 'intersection'.
    """

    adaptive_block: int = 61
    adaptive_c: float = 10.0
    combine_mode: str = "union"

    def __post_init__(self) -> None:
        if self.adaptive_block < 3 or self.adaptive_block % 2 == 0:
            raise ValueError(f"adaptive_block must be odd and >= 3, got {self.adaptive_block}")
        if self.combine_mode not in ("union", "intersection"):
            raise ValueError(f"combine_mode must be union or intersection, "
                             f"got {self.combine_mode!r}")


@dataclass(frozen=True)
class BusbarLayout:
    """Detected structural bands and the border margin to suppress.

    Bands are (center, half_width) pairs in pixels; vertical bands span
    columns, horizontal bands span rows.
    """

    vertical_bands: tuple[tuple[int, int], ...] = ()
    horizontal_bands: tuple[tuple[int, int], ...] = ()
    border_margin: int = 0


def disparity_intensity(dmap: np.ndarray) -> np.ndarray:
    """Map SSIM values in [-1, 1] to unit-scale disparity (1 - s) / 2."""
    dmap = require_image(dmap, "disparity map")
    return np.clip((1.0 - dmap) / 2.0, 0.0, 1.0)


def otsu_threshold(img: np.ndarray) -> tuple[float, np.ndarray]:
    """Global threshold maximizing between-class variance over 256 bins.

    Expects a unit-scale image. Returns (threshold, mask) with mask = img >
    threshold. Ties pick the lowest bin. A zero-variance histogram (constant
    image) is degenerate: the threshold is the maximum value and the mask is
    empty, and the condition is logged.
    """
    img = require_image(img)
    bins = np.clip(np.floor(img * OTSU_BINS).astype(np.int64), 0, OTSU_BINS - 1)
    hist = np.bincount(bins.ravel(), minlength=OTSU_BINS).astype(np.float64)
    total = hist.sum()

    w0 = np.cumsum(hist)
    sum0 = np.cumsum(hist * np.arange(OTSU_BINS))
    w1 = total - w0
    mu0 = np.divide(sum0, w0, out=np.zeros_like(sum0), where=w0 > 0)
    mu1 = np.divide(sum0[-1] - sum0, w1, out=np.zeros_like(sum0), where=w1 > 0)
    between = w0 * w1 * (mu0 - mu1) ** 2

    best = float(between.max())
    if best <= 0.0:
        log.info("otsu_threshold: degenerate histogram, returning empty mask")
        t = float(img.max())
        return t, np.zeros(img.shape, dtype=bool)
    t_bin = int(np.argmax(between))  # argmax returns the lowest tied bin
    t = (t_bin + 1) / OTSU_BINS
    return t, img > t


def _box_operator(n: int, size: int) -> np.ndarray:
    """Dense (n, n) moving-average operator with mirror padding."""
    half = size // 2
    idx = np.pad(np.arange(n), half, mode="symmetric")
    op = np.zeros((n, n), dtype=np.float64)
    w = 1.0 / size
    for t in range(size):
        np.add.at(op, (np.arange(n), idx[t : t + n]), w)
    return op


def adaptive_mean_threshold(img: np.ndarray, config: ThresholdConfig) -> np.ndarray:
    """Mark pixels brighter than their local box mean by more than C.

    The block mean uses mirror padding. The block must be smaller than both
    image dimensions.
    """
    img = require_image(img)
    h, w = img.shape
    block = config.adaptive_block
    if block >= h or block >= w:
        raise ValueError(f"adaptive_block {block} must be smaller than both "
                         f"image dimensions {h}x{w}")
    local_mean = _box_operator(h, block) @ img @ _box_operator(w, block).T
    return img > local_mean + config.adaptive_c / 255.0


def combine_masks(a: np.ndarray, b: np.ndarray, mode: str = "union") -> np.ndarray:
    """Union or intersection of two same-shape binary masks."""
    a = require_mask(a, "mask a")
    b = require_mask(b, "mask b")
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    if mode == "union":
        return a | b
    if mode == "intersection":
        return a & b
    raise ValueError(f"mode must be union or intersection, got {mode!r}")


def _profile_bands(profile: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous runs of a 1-D profile below (mean - std), as (center, half_width)."""
    cutoff = float(profile.mean()) - float(profile.std())
    below = profile < cutoff
    bands = []
    start = None
    for i, flag in enumerate([*below, False]):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            end = i - 1
            center = (start + end) // 2
            half_width = max(1, int(np.ceil((end - start + 1) / 2)))
            depth = float(profile[start : end + 1].min())
            bands.append((center, half_width, depth))
            start = None
    return bands


def _keep_deepest(bands: list[tuple[int, int, float]], count: int | None):
    if count is None:
        return bands
    if count < 0:
        raise ValueError("band counts must be >= 0")
    kept = sorted(bands, key=lambda b: b[2])[:count]
    kept.sort(key=lambda b: b[0])
    return kept


def detect_busbars(original: np.ndarray, expected_count: int | None = None,
                   border_margin_frac: float = 0.02,
                   horizontal_count: int | None = None) -> BusbarLayout:
    """Locate dark structural bands from column/row mean profiles.

    A band is a contiguous run of profile values below the profile mean minus
    one standard deviation. When expected_count (vertical) or horizontal_count
    is given, only the deepest that many bands are kept on that axis; pass 0
    to disable an axis. Constant images yield no bands.
    """
    original = require_image(original)
    if not 0.0 <= border_margin_frac < 0.5:
        raise ValueError("border_margin_frac must be in [0, 0.5)")
    col_bands = _keep_deepest(_profile_bands(original.mean(axis=0)), expected_count)
    row_bands = _keep_deepest(_profile_bands(original.mean(axis=1)), horizontal_count)
    margin = int(round(border_margin_frac * min(original.shape)))
    return BusbarLayout(
        vertical_bands=tuple((c, hw) for c, hw, _ in col_bands),
        horizontal_bands=tuple((c, hw) for c, hw, _ in row_bands),
        border_margin=margin,
    )


def clean_noise(mask: np.ndarray, layout: BusbarLayout, band_pad: int = 0) -> np.ndarray:
    """Zero mask pixels inside busbar bands and the border frame.

    band_pad widens each band on both sides to absorb reconstruction halo
    around sharp structural edges. Idempotent for a fixed layout.
    """
    mask = require_mask(mask)
    out = mask.copy()
    h, w = out.shape
    for center, half_width in layout.vertical_bands:
        lo = max(0, center - half_width - band_pad)
        hi = min(w, center + half_width + band_pad + 1)
        out[:, lo:hi] = False
    for center, half_width in layout.horizontal_bands:
        lo = max(0, center - half_width - band_pad)
        hi = min(h, center + half_width + band_pad + 1)
        out[lo:hi, :] = False
    m = layout.border_margin
    if m > 0:
        out[:m, :] = False
        out[-m:, :] = False
        out[:, :m] = False
        out[:, -m:] = False
    return out


def mask_to_points(mask: np.ndarray) -> np.ndarray:
    """Foreground pixel coordinates as an (n, 2) array of (x, y), row-major order."""
    mask = require_mask(mask)
    ys, xs = np.nonzero(mask)
    return np.column_stack([xs, ys]).astype(np.float64)
