"""Model persistence: a small binary container with a JSON header.

Layout: magic line, little-endian uint32 header length, UTF-8 JSON header
(scale tag, seed, dtype, per-parameter shapes, free-form provenance), then
the raw little-endian parameter bytes in layer order. Round-trips are
bit-exact because parameters are stored verbatim.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import Model, SCALES, build_model

MAGIC = b"PVELAE1\n"


class ModelFormatError(ValueError):
    """Raised when a model file is unreadable, truncated, or incompatible."""


def save_model(model: Model, path: str | Path, provenance: dict | None = None) -> None:
    params = model.parameters()
    header = {
        "scale": model.scale,
        "seed": model.seed,
        "dtype": model.dtype.name,
        "input_shape": list(model.input_shape),
        "latent_dim": model.latent_dim,
        "param_shapes": [list(p.shape) for p in params],
        "provenance": provenance or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(header_bytes)).tobytes())
        fh.write(header_bytes)
        for p in params:
            fh.write(np.ascontiguousarray(p, dtype=np.dtype(p.dtype).newbyteorder("<"))
                     .tobytes())


def load_model(path: str | Path) -> tuple[Model, dict]:
    """Rebuild a model from disk; returns (model, provenance)."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    offset = len(MAGIC)
    if len(raw) < offset + 4:
        raise ModelFormatError(f"{path}: truncated header length")
    header_len = int(np.frombuffer(raw, dtype="<u4", count=1, offset=offset)[0])
    offset += 4
    if len(raw) < offset + header_len:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: unreadable header: {exc}") from exc
    offset += header_len

    scale = header.get("scale")
    if scale not in SCALES:
        raise ModelFormatError(f"{path}: unknown scale tag {scale!r}")
    dtype = np.dtype(header["dtype"])
    model = build_model(scale=scale, seed=int(header.get("seed", 0)), dtype=dtype)
    params = model.parameters()
    shapes = [tuple(s) for s in header["param_shapes"]]
    if shapes != [p.shape for p in params]:
        raise ModelFormatError(f"{path}: parameter shapes do not match the "
                               f"{scale} architecture")
    little = dtype.newbyteorder("<")
    for p in params:
        nbytes = p.size * dtype.itemsize
        if len(raw) < offset + nbytes:
            raise ModelFormatError(f"{path}: truncated parameter data")
        values = np.frombuffer(raw, dtype=little, count=p.size, offset=offset)
        p[...] = values.reshape(p.shape).astype(dtype)
        offset += nbytes
    if offset != len(raw):
        raise ModelFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return model, header.get("provenance", {})
