"""Neural network layers with explicit forward and backward passes.

Activations live inside the layers. Tensors are batch-first channel-last:
(N, H, W, C) for spatial layers, (N, D) for dense layers. Each layer exposes
params/grads lists; backward accumulates into grads and returns the input
gradient.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_LEAKY_ALPHA = 0.025

_ACTIVATIONS = ("leaky_relu", "sigmoid", "linear")


def _check_activation(name: str) -> str:
    if name not in _ACTIVATIONS:
        raise ValueError(f"activation must be one of {_ACTIVATIONS}, got {name!r}")
    return name


def _apply_activation(z: np.ndarray, name: str, alpha: float) -> np.ndarray:
    if name == "leaky_relu":
        return np.where(z >= 0, z, alpha * z)
    if name == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(z: np.ndarray, out: np.ndarray, name: str, alpha: float) -> np.ndarray:
    if name == "leaky_relu":
        return np.where(z >= 0, 1.0, alpha).astype(z.dtype)
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator,
               dtype) -> np.ndarray:
    """Uniform init on [-limit, limit] with limit = sqrt(6 / fan_in)."""
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


class Layer:
    """Base class: parameter bookkeeping shared by all layers."""

    def __init__(self) -> None:
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []

    def zero_grads(self) -> None:
        for g in self.grads:
            g[...] = 0.0

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError


class Conv2D(Layer):
    """2-D convolution (cross-correlation) with optional TF-style 'same' padding.

    'valid' requires the kernel to step the input exactly; 'same' keeps the
    spatial size (stride 1) padding floor((k-1)/2) before, the rest after.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size, stride=1,
                 padding: str = "valid", activation: str = "leaky_relu",
                 alpha: float = DEFAULT_LEAKY_ALPHA, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = _pair(kernel_size)
        self.stride = _pair(stride)
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be valid or same, got {padding!r}")
        if padding == "same" and self.stride != (1, 1):
            raise ValueError("'same' convolution padding requires stride 1")
        self.padding = padding
        self.activation = _check_activation(activation)
        self.alpha = alpha
        rng = rng or np.random.default_rng()
        kh, kw = self.kernel
        fan_in = kh * kw * in_channels
        self.w = he_uniform((kh, kw, in_channels, out_channels), fan_in, rng, dtype)
        self.b = np.zeros(out_channels, dtype=dtype)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]
        self._cache = None

    def _pads(self) -> tuple[int, int, int, int]:
        if self.padding == "valid":
            return 0, 0, 0, 0
        kh, kw = self.kernel
        return (kh - 1) // 2, kh - 1 - (kh - 1) // 2, (kw - 1) // 2, kw - 1 - (kw - 1) // 2

    def out_shape(self, in_shape):
        h, w, c = in_shape
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {c}")
        kh, kw = self.kernel
        sh, sw = self.stride
        pt, pb, pl, pr = self._pads()
        h_p, w_p = h + pt + pb, w + pl + pr
        if (h_p - kh) % sh or (w_p - kw) % sw:
            raise ValueError(f"kernel {self.kernel} stride {self.stride} does not "
                             f"tile input {h}x{w}")
        return ((h_p - kh) // sh + 1, (w_p - kw) // sw + 1, self.out_channels)

    def forward(self, x, train=False):
        n, h, w, _ = x.shape
        oh, ow, _ = self.out_shape(x.shape[1:])
        pt, pb, pl, pr = self._pads()
        if pt or pb or pl or pr:
            x = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        kh, kw = self.kernel
        sh, sw = self.stride
        # windows: (N, oh, ow, C, kh, kw); flatten to rows matching w_mat layout
        windows = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
        cols = windows.reshape(n * oh * ow, self.in_channels * kh * kw)
        w_mat = self.w.transpose(2, 0, 1, 3).reshape(self.in_channels * kh * kw,
                                                     self.out_channels)
        z = (cols @ w_mat + self.b).reshape(n, oh, ow, self.out_channels)
        out = _apply_activation(z, self.activation, self.alpha)
        if train:
            self._cache = (x.shape, cols, z, out)
        return out

    def backward(self, dy):
        xp_shape, cols, z, out = self._cache
        n, oh, ow, _ = dy.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        pt, pb, pl, pr = self._pads()
        dz = (dy * _activation_grad(z, out, self.activation, self.alpha))
        dz_mat = dz.reshape(n * oh * ow, self.out_channels)
        w_mat = self.w.transpose(2, 0, 1, 3).reshape(-1, self.out_channels)
        dw_mat = cols.T @ dz_mat
        self.grads[0] += dw_mat.reshape(self.in_channels, kh, kw,
                                        self.out_channels).transpose(1, 2, 0, 3)
        self.grads[1] += dz_mat.sum(axis=0)
        dcols = (dz_mat @ w_mat.T).reshape(n, oh, ow, self.in_channels, kh, kw)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        for ki in range(kh):
            for kj in range(kw):
                dxp[:, ki : ki + sh * oh : sh, kj : kj + sw * ow : sw, :] += \
                    dcols[:, :, :, :, ki, kj]
        h = xp_shape[1] - pt - pb
        w = xp_shape[2] - pl - pr
        return dxp[:, pt : pt + h, pl : pl + w, :]


class Deconv2D(Layer):
    """Transposed convolution upsampling by the stride: out = in * stride.

    The implicit padding (kernel - stride per axis, front-loaded after the
    floor split) is cropped from the scattered output, making this the exact
    adjoint of a matching strided convolution.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size, stride=1,
                 activation: str = "leaky_relu", alpha: float = DEFAULT_LEAKY_ALPHA,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = _pair(kernel_size)
        self.stride = _pair(stride)
        kh, kw = self.kernel
        sh, sw = self.stride
        if kh < sh or kw < sw:
            raise ValueError("kernel must be at least the stride on each axis")
        self.activation = _check_activation(activation)
        self.alpha = alpha
        rng = rng or np.random.default_rng()
        fan_in = kh * kw * in_channels
        self.w = he_uniform((kh, kw, in_channels, out_channels), fan_in, rng, dtype)
        self.b = np.zeros(out_channels, dtype=dtype)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]
        self._cache = None

    def _crops(self) -> tuple[int, int]:
        kh, kw = self.kernel
        sh, sw = self.stride
        return (kh - sh) // 2, (kw - sw) // 2

    def out_shape(self, in_shape):
        h, w, c = in_shape
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {c}")
        return (h * self.stride[0], w * self.stride[1], self.out_channels)

    def forward(self, x, train=False):
        n, h, w, _ = x.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        full = np.zeros((n, (h - 1) * sh + kh, (w - 1) * sw + kw, self.out_channels),
                        dtype=x.dtype)
        for ki in range(kh):
            for kj in range(kw):
                full[:, ki : ki + sh * h : sh, kj : kj + sw * w : sw, :] += \
                    np.tensordot(x, self.w[ki, kj], axes=([3], [0]))
        ct, cl = self._crops()
        oh, ow = h * sh, w * sw
        z = full[:, ct : ct + oh, cl : cl + ow, :] + self.b
        out = _apply_activation(z, self.activation, self.alpha)
        if train:
            self._cache = (x, full.shape, z, out)
        return out

    def backward(self, dy):
        x, full_shape, z, out = self._cache
        n, h, w, _ = x.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        ct, cl = self._crops()
        oh, ow = h * sh, w * sw
        dz = dy * _activation_grad(z, out, self.activation, self.alpha)
        self.grads[1] += dz.sum(axis=(0, 1, 2))
        dfull = np.zeros(full_shape, dtype=dy.dtype)
        dfull[:, ct : ct + oh, cl : cl + ow, :] = dz
        dx = np.zeros_like(x)
        for ki in range(kh):
            for kj in range(kw):
                window = dfull[:, ki : ki + sh * h : sh, kj : kj + sw * w : sw, :]
                self.grads[0][ki, kj] += np.tensordot(x, window, axes=([0, 1, 2], [0, 1, 2]))
                dx += np.tensordot(window, self.w[ki, kj], axes=([3], [1]))
        return dx


class Dense(Layer):
    """Fully connected layer on (N, D) tensors."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "leaky_relu",
                 alpha: float = DEFAULT_LEAKY_ALPHA, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = _check_activation(activation)
        self.alpha = alpha
        rng = rng or np.random.default_rng()
        self.w = he_uniform((in_dim, out_dim), in_dim, rng, dtype)
        self.b = np.zeros(out_dim, dtype=dtype)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]
        self._cache = None

    def out_shape(self, in_shape):
        if in_shape != (self.in_dim,):
            raise ValueError(f"expected input dim {self.in_dim}, got {in_shape}")
        return (self.out_dim,)

    def forward(self, x, train=False):
        z = x @ self.w + self.b
        out = _apply_activation(z, self.activation, self.alpha)
        if train:
            self._cache = (x, z, out)
        return out

    def backward(self, dy):
        x, z, out = self._cache
        dz = dy * _activation_grad(z, out, self.activation, self.alpha)
        self.grads[0] += x.T @ dz
        self.grads[1] += dz.sum(axis=0)
        return dz @ self.w.T


class Flatten(Layer):
    """(N, H, W, C) -> (N, H*W*C)."""

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Reshape(Layer):
    """(N, D) -> (N, *target); target must preserve the element count."""

    def __init__(self, target: tuple[int, ...]):
        super().__init__()
        self.target = tuple(int(t) for t in target)

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.target)):
            raise ValueError(f"cannot reshape {in_shape} to {self.target}")
        return self.target

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], *self.target)

    def backward(self, dy):
        return dy.reshape(self._shape)
