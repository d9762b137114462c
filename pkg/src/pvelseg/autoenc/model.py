"""Autoencoder topology: a fixed conv/deconv stack at two scales.

The full scale targets 480x640 electroluminescence frames with a latent size
of 200; the desk scale is the same stack with halved filter counts on 64x64
inputs with a latent size of 32, small enough to train in minutes on a CPU.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (DEFAULT_LEAKY_ALPHA, Conv2D, Deconv2D, Dense, Flatten,
                     Layer, Reshape)

SCALES = ("desk", "full")

# (kind, filters, kernel, stride) for the conv stack; dense stages in between.
_ENCODER = (
    ("conv", 0, 2, 2),
    ("conv", 1, 2, 2),
    ("conv", 2, 4, 1),
    ("conv", 3, 2, 2),
    ("conv", 4, 4, 1),
    ("conv", 5, 4, 1),
    ("conv", 6, 4, 1),
)
_DECODER = (
    ("deconv", 0, 4, 1),
    ("deconv", 1, 4, 1),
    ("deconv", 2, 4, 1),
    ("deconv", 3, 2, 2),
    ("deconv", 4, 4, 1),
    ("deconv", 5, 2, 2),
    ("deconv", 6, 2, 2),
)
_FULL_ENC_FILTERS = (32, 16, 8, 16, 8, 16, 8)
_FULL_DEC_FILTERS = (8, 16, 8, 16, 8, 16, 1)


@dataclass(frozen=True)
class LayerSpec:
    """Shape-level description of one layer for reports and model files."""

    kind: str
    output_shape: tuple[int, ...]
    parameters: int
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] | None = None
    activation: str | None = None


class Model:
    """Sequential autoencoder; forward maps unit-scale images to unit scale."""

    def __init__(self, scale: str, input_shape: tuple[int, int, int], latent_dim: int,
                 layers: list[Layer], seed: int, dtype):
        self.scale = scale
        self.input_shape = input_shape
        self.latent_dim = latent_dim
        self.layers = layers
        self.seed = seed
        self.dtype = np.dtype(dtype)

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.zero_grads()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def layer_specs(self) -> list[LayerSpec]:
        specs = []
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
            specs.append(LayerSpec(
                kind=type(layer).__name__,
                output_shape=tuple(int(v) for v in shape),
                parameters=sum(p.size for p in layer.params),
                kernel=getattr(layer, "kernel", None),
                stride=getattr(layer, "stride", None),
                activation=getattr(layer, "activation", None),
            ))
        return specs

    def _batchify(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x)
        if x.ndim == 2:
            x, single = x[None, :, :, None], True
        elif x.ndim == 3:
            if x.shape == self.input_shape:  # (H, W, 1)
                x, single = x[None], True
            else:  # stack of 2-D images
                x, single = x[:, :, :, None], False
        elif x.ndim == 4:
            single = False
        else:
            raise ValueError(f"cannot interpret input of shape {x.shape}")
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match "
                             f"model input {self.input_shape}")
        return x.astype(self.dtype, copy=False), single

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        """Run the stack; accepts (H, W), (N, H, W), or (N, H, W, 1) input."""
        batch, single = self._batchify(x)
        out = batch
        for layer in self.layers:
            out = layer.forward(out, train=train)
        return out[0, :, :, 0] if single else out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        grad = dy.astype(self.dtype, copy=False)
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def reconstruct(self, image: np.ndarray) -> np.ndarray:
        """Reconstruction of one 2-D unit-scale image."""
        return np.asarray(self.forward(image), dtype=np.float64)


def build_model(scale: str = "desk", seed: int = 0, dtype=np.float32,
                leaky_alpha: float = DEFAULT_LEAKY_ALPHA) -> Model:
    """Construct the autoencoder at the requested scale with seeded init."""
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    if scale == "full":
        input_shape = (480, 640, 1)
        latent = 200
        enc_filters = _FULL_ENC_FILTERS
        dec_filters = _FULL_DEC_FILTERS
    else:
        input_shape = (64, 64, 1)
        latent = 32
        enc_filters = tuple(f // 2 for f in _FULL_ENC_FILTERS)
        dec_filters = tuple(max(1, f // 2) for f in _FULL_DEC_FILTERS[:-1]) + (1,)

    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    channels = input_shape[2]
    shape = input_shape
    for kind, fi, k, s in _ENCODER:
        conv = Conv2D(channels, enc_filters[fi], k, s,
                      padding="same" if s == 1 else "valid",
                      activation="leaky_relu", alpha=leaky_alpha, rng=rng, dtype=dtype)
        layers.append(conv)
        shape = conv.out_shape(shape)
        channels = enc_filters[fi]

    bottleneck_shape = shape
    flat = int(np.prod(shape))
    layers.append(Flatten())
    layers.append(Dense(flat, latent, activation="leaky_relu", alpha=leaky_alpha,
                        rng=rng, dtype=dtype))
    layers.append(Dense(latent, flat, activation="leaky_relu", alpha=leaky_alpha,
                        rng=rng, dtype=dtype))
    layers.append(Reshape(bottleneck_shape))

    for i, (kind, fi, k, s) in enumerate(_DECODER):
        last = i == len(_DECODER) - 1
        deconv = Deconv2D(channels, dec_filters[fi], k, s,
                          activation="sigmoid" if last else "leaky_relu",
                          alpha=leaky_alpha, rng=rng, dtype=dtype)
        layers.append(deconv)
        channels = dec_filters[fi]

    model = Model(scale=scale, input_shape=input_shape, latent_dim=latent,
                  layers=layers, seed=seed, dtype=dtype)
    out_shape = model.layer_specs()[-1].output_shape
    if out_shape != input_shape:
        raise AssertionError(f"decoder output {out_shape} != input {input_shape}")
    return model
