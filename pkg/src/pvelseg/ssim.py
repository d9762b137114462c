"""Windowed structural similarity: maps, means, and the gradient used as a loss.

Local statistics use a Gaussian-weighted window with symmetric (mirror)
boundary padding. The windowed filter is applied as an explicit separable
linear operator so the loss gradient below is the exact adjoint of the
forward computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class SsimParams:
    """Window and stabilization constants for one SSIM configuration.

    dynamic_range is the intensity span L: 255 for raw-scale images, 1.0 for
    unit-scale images. gaussian_sigma defaults to window_size / 6.
    """

    window_size: int = 7
    k1: float = 0.001
    k2: float = 0.03
    dynamic_range: float = 1.0
    gaussian_sigma: float | None = None

    def __post_init__(self) -> None:
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValueError(f"window_size must be odd and positive, got {self.window_size}")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")
        if self.dynamic_range <= 0:
            raise ValueError("dynamic_range must be positive")
        if self.gaussian_sigma is not None and self.gaussian_sigma <= 0:
            raise ValueError("gaussian_sigma must be positive")

    @property
    def sigma(self) -> float:
        return self.gaussian_sigma if self.gaussian_sigma is not None else self.window_size / 6.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


# Reconstruction-loss window (unit-scale images).
LOSS_PRESET = SsimParams(window_size=7, k1=0.001, k2=0.03, dynamic_range=1.0)
# Disparity-map window used ahead of thresholding (unit-scale images).
DISPARITY_PRESET = SsimParams(window_size=11, k1=0.001, k2=0.05, dynamic_range=1.0)


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian kernel of the given odd size."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"window size must be odd and positive, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    win = np.outer(g, g)
    return win / win.sum()


@lru_cache(maxsize=64)
def _axis_operator(n: int, size: int, sigma: float) -> np.ndarray:
    """Dense (n, n) operator applying the 1-D Gaussian with mirror padding.

    Row i of the result holds the weights of output sample i over the
    unpadded input, with out-of-range taps folded back symmetrically
    (edge-inclusive mirroring).
    """
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    idx = np.pad(np.arange(n), half, mode="symmetric")
    op = np.zeros((n, n), dtype=np.float64)
    for t in range(size):
        np.add.at(op, (np.arange(n), idx[t : t + n]), g[t])
    return op


def _operators(shape: tuple[int, int], params: SsimParams) -> tuple[np.ndarray, np.ndarray]:
    h, w = shape
    if h < 1 or w < 1:
        raise ValueError("images must be non-empty")
    return (_axis_operator(h, params.window_size, params.sigma),
            _axis_operator(w, params.window_size, params.sigma))


def _blur(x: np.ndarray, op_h: np.ndarray, op_w: np.ndarray) -> np.ndarray:
    """Windowed local mean of x; batched when x has a leading stack axis."""
    return np.matmul(np.matmul(op_h, x), op_w.T)


def _blur_adjoint(g: np.ndarray, op_h: np.ndarray, op_w: np.ndarray) -> np.ndarray:
    """Adjoint of _blur under the standard inner product."""
    return np.matmul(np.matmul(op_h.T, g), op_w)


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3):
        raise ValueError(f"expected 2-D images or a 3-D stack, got shape {a.shape}")
    return a, b


def _ssim_terms(a, b, params, op_h, op_w):
    """Shared forward computation. Returns (map, intermediates for the gradient)."""
    mu_a = _blur(a, op_h, op_w)
    mu_b = _blur(b, op_h, op_w)
    e_aa = _blur(a * a, op_h, op_w)
    e_bb = _blur(b * b, op_h, op_w)
    e_ab = _blur(a * b, op_h, op_w)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    a1 = 2.0 * mu_a * mu_b + params.c1
    a2 = 2.0 * cov + params.c2
    b1 = mu_a * mu_a + mu_b * mu_b + params.c1
    b2 = var_a + var_b + params.c2
    smap = (a1 * a2) / (b1 * b2)
    return smap, (mu_a, mu_b, a1, a2, b1, b2)


def ssim_map(a: np.ndarray, b: np.ndarray, params: SsimParams = LOSS_PRESET) -> np.ndarray:
    """Per-pixel SSIM between two same-shape images, clipped to [-1, 1]."""
    a, b = _check_pair(a, b)
    if a.ndim != 2:
        raise ValueError("ssim_map expects single 2-D images")
    op_h, op_w = _operators(a.shape, params)
    smap, _ = _ssim_terms(a, b, params, op_h, op_w)
    return np.clip(smap, -1.0, 1.0)


def mean_ssim(a: np.ndarray, b: np.ndarray, params: SsimParams = LOSS_PRESET) -> float:
    """Arithmetic mean of the SSIM map."""
    return float(ssim_map(a, b, params).mean())


def mean_ssim_and_grad(
    a: np.ndarray, b: np.ndarray, params: SsimParams = LOSS_PRESET
) -> tuple[float, np.ndarray]:
    """Mean SSIM and its exact gradient with respect to the second image.

    Accepts single images (H, W) or stacks (N, H, W). For stacks the scalar
    is the mean over all images and the gradient is taken of that scalar, so
    finite differences on any entry of b reproduce it. The gradient is
    derived from the unclipped map, which matches the clipped mean wherever
    the clip is inactive.
    """
    a, b = _check_pair(a, b)
    single = a.ndim == 2
    if single:
        a = a[None]
        b = b[None]
    op_h, op_w = _operators(a.shape[1:], params)
    smap, (mu_a, mu_b, a1, a2, b1, b2) = _ssim_terms(a, b, params, op_h, op_w)

    denom = b1 * b2
    # Partial derivatives of the map with respect to the three filtered
    # moments that depend on b: mu_b, E[b^2], E[a*b].
    d_mu_b = 2.0 * mu_a * (a2 - a1) / denom - 2.0 * mu_b * (a1 * a2) * (b2 - b1) / (denom * denom)
    d_e_bb = -(a1 * a2) / (b1 * b2 * b2)
    d_e_ab = 2.0 * a1 / denom

    n_pix = a.shape[1] * a.shape[2]
    grad = (_blur_adjoint(d_mu_b, op_h, op_w)
            + 2.0 * b * _blur_adjoint(d_e_bb, op_h, op_w)
            + a * _blur_adjoint(d_e_ab, op_h, op_w)) / n_pix

    means = smap.reshape(smap.shape[0], -1).mean(axis=1)
    if single:
        return float(means[0]), grad[0]
    return float(means.mean()), grad / a.shape[0]


def mean_ssim_batch(a: np.ndarray, b: np.ndarray, params: SsimParams = LOSS_PRESET) -> np.ndarray:
    """Per-image mean SSIM over stacks shaped (N, H, W)."""
    a, b = _check_pair(a, b)
    if a.ndim != 3:
        raise ValueError("mean_ssim_batch expects stacks shaped (N, H, W)")
    op_h, op_w = _operators(a.shape[1:], params)
    smap, _ = _ssim_terms(a, b, params, op_h, op_w)
    smap = np.clip(smap, -1.0, 1.0)
    return smap.reshape(smap.shape[0], -1).mean(axis=1)
