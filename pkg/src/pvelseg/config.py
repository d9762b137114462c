"""Pipeline configuration: flat dotted keys, file and environment overrides.

Config files are plain text: one `key = value` per line, '#' starts a
comment, blank lines are ignored. Every knob has a default, so an empty file
is valid. Environment variables override file values using the prefix
PVELSEG_ with dots replaced by underscores (PVELSEG_DBSCAN_EPSILON=4).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

ENV_PREFIX = "PVELSEG_"


class ConfigError(ValueError):
    """Bad key, bad value, or unreadable config text."""


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    model_scale: str = "full"
    ssim_loss_window: int = 7
    ssim_loss_k1: float = 0.001
    ssim_loss_k2: float = 0.03
    ssim_disparity_window: int = 11
    ssim_disparity_k1: float = 0.001
    ssim_disparity_k2: float = 0.05
    threshold_adaptive_block: int = 61
    threshold_adaptive_c: float = 10.0
    threshold_combine: str = "union"
    busbar_expected_count: int | None = None
    busbar_horizontal_count: int | None = None
    busbar_border_margin_frac: float = 0.02
    busbar_band_pad: int = 0
    dbscan_epsilon: float = 10.0
    dbscan_min_pts: int = 100
    alpha_value: float = 1.4142135623730951
    train_learning_rate: float = 0.003
    train_batch_size: int = 16
    train_max_epochs: int = 200
    train_validate_every: int = 5
    train_patience: int = 10
    train_split_fraction: float = 0.8
    synth_width: int = 64
    synth_height: int = 64
    synth_busbar_count: int = 3
    synth_busbar_width: int = 3
    synth_background_level: float = 0.75
    synth_texture_amplitude: float = 0.05
    synth_corner_rounding: int = 5
    synth_defect_rate: float = 0.5
    synth_defect_kinds: tuple[str, ...] = ("crack", "dead_patch", "degradation")
    synth_defect_inset: float = 0.0
    synth_count: int = 100
    cost_t_revision: float = 5.3
    cost_t_tuning: float = 1950.0


# (dotted key, attribute, type tag, comment). Type tags: int, float, str,
# opt_int (blank means unset), csv (comma-separated strings).
FIELDS: list[tuple[str, str, str, str]] = [
    ("seed", "seed", "int", "master seed for splits and mini-batch order"),
    ("model.scale", "model_scale", "str", "autoencoder scale: full or desk"),
    ("ssim.loss.window", "ssim_loss_window", "int", "window size of the training loss"),
    ("ssim.loss.k1", "ssim_loss_k1", "float", "luminance stabilizer of the loss"),
    ("ssim.loss.k2", "ssim_loss_k2", "float", "contrast stabilizer of the loss"),
    ("ssim.disparity.window", "ssim_disparity_window", "int",
     "window size of the disparity map"),
    ("ssim.disparity.k1", "ssim_disparity_k1", "float",
     "luminance stabilizer of the disparity map"),
    ("ssim.disparity.k2", "ssim_disparity_k2", "float",
     "contrast stabilizer of the disparity map"),
    ("threshold.adaptive_block", "threshold_adaptive_block", "int",
     "odd block size of the local-mean threshold"),
    ("threshold.adaptive_c", "threshold_adaptive_c", "float",
     "local-mean offset on the 0..255 scale"),
    ("threshold.combine", "threshold_combine", "str",
     "how Otsu and adaptive masks merge: union or intersection"),
    ("busbar.expected_count", "busbar_expected_count", "opt_int",
     "vertical busbars to keep; blank keeps all detected"),
    ("busbar.horizontal_count", "busbar_horizontal_count", "opt_int",
     "horizontal bands to keep; blank keeps all detected"),
    ("busbar.border_margin_frac", "busbar_border_margin_frac", "float",
     "border margin as a fraction of the short image side"),
    ("busbar.band_pad", "busbar_band_pad", "int",
     "extra pixels cleaned on each side of a detected band"),
    ("dbscan.epsilon", "dbscan_epsilon", "float", "neighborhood radius in pixels"),
    ("dbscan.min_pts", "dbscan_min_pts", "int", "points required to seed a cluster"),
    ("alpha.value", "alpha_value", "float",
     "alpha-shape tightness; triangles with circumradius above 1/alpha drop"),
    ("train.learning_rate", "train_learning_rate", "float", "Adam step size"),
    ("train.batch_size", "train_batch_size", "int", "mini-batch size"),
    ("train.max_epochs", "train_max_epochs", "int", "epoch budget"),
    ("train.validate_every", "train_validate_every", "int",
     "epochs between validation passes"),
    ("train.patience", "train_patience", "int",
     "non-improving validations before early stop"),
    ("train.split_fraction", "train_split_fraction", "float",
     "fraction of images used for training"),
    ("synth.width", "synth_width", "int", "synthetic cell width"),
    ("synth.height", "synth_height", "int", "synthetic cell height"),
    ("synth.busbar_count", "synth_busbar_count", "int", "vertical busbars per cell"),
    ("synth.busbar_width", "synth_busbar_width", "int", "busbar width in pixels"),
    ("synth.background_level", "synth_background_level", "float",
     "bright-body intensity in [0, 1]"),
    ("synth.texture_amplitude", "synth_texture_amplitude", "float",
     "amplitude of the smoothed texture noise"),
    ("synth.corner_rounding", "synth_corner_rounding", "int",
     "rounded-corner radius in pixels"),
    ("synth.defect_rate", "synth_defect_rate", "float",
     "probability that a generated cell is defective"),
    ("synth.defect_kinds", "synth_defect_kinds", "csv",
     "defect kinds to sample: crack, dead_patch, degradation"),
    ("synth.defect_inset", "synth_defect_inset", "float",
     "minimum distance from defects to the border"),
    ("synth.count", "synth_count", "int", "cells per generated dataset"),
    ("cost.t_revision", "cost_t_revision", "float",
     "assumed review seconds per image for cost reports"),
    ("cost.t_tuning", "cost_t_tuning", "float",
     "one-off tuning seconds amortized in cost reports"),
]

_BY_KEY = {key: (attr, kind) for key, attr, kind, _ in FIELDS}


def _parse_value(key: str, kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "opt_int":
            return None if raw == "" else int(raw)
        if kind == "csv":
            return tuple(part.strip() for part in raw.split(",") if part.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from exc


def _format_value(kind: str, value) -> str:
    if kind == "opt_int":
        return "" if value is None else str(value)
    if kind == "csv":
        return ",".join(value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse config text over a base config (defaults when omitted)."""
    cfg = base or PipelineConfig()
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _BY_KEY:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, kind = _BY_KEY[key]
        overrides[attr] = _parse_value(key, kind, raw)
    return replace(cfg, **overrides)


def load_config(path: str | Path, base: PipelineConfig | None = None) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base)


def apply_env_overrides(cfg: PipelineConfig,
                        environ: dict[str, str] | None = None) -> PipelineConfig:
    environ = os.environ if environ is None else environ
    overrides = {}
    for key, attr, kind, _ in FIELDS:
        env_key = ENV_PREFIX + key.replace(".", "_").upper()
        if env_key in environ:
            overrides[attr] = _parse_value(key, kind, environ[env_key])
    return replace(cfg, **overrides) if overrides else cfg


def serialize_config(cfg: PipelineConfig) -> str:
    """Commented key-value document; parsing it back reproduces cfg exactly."""
    lines = ["# pipeline configuration", ""]
    for key, attr, kind, comment in FIELDS:
        lines.append(f"# {comment}")
        lines.append(f"{key} = {_format_value(kind, getattr(cfg, attr))}")
        lines.append("")
    return "\n".join(lines)


def desk_preset() -> PipelineConfig:
    """Small-scale preset tuned for 64x64 synthetic cells.

    The disparity window shrinks with the cell so defects stay several
    windows wide; the autoencoder reproduces the fixed busbar positions, so
    only the border frame needs cleaning (band counts 0 disable both axes).
    """
    return replace(
        PipelineConfig(),
        model_scale="desk",
        ssim_disparity_window=3,
        threshold_adaptive_block=13,
        threshold_adaptive_c=40.0,
        busbar_expected_count=0,
        busbar_horizontal_count=0,
        busbar_border_margin_frac=0.05,
        busbar_band_pad=0,
        dbscan_epsilon=2.5,
        dbscan_min_pts=8,
    )


def full_preset() -> PipelineConfig:
    """Full-resolution preset (the defaults)."""
    return PipelineConfig()


def preset(name: str) -> PipelineConfig:
    if name == "desk":
        return desk_preset()
    if name == "full":
        return full_preset()
    raise ConfigError(f"unknown preset {name!r}, expected desk or full")
