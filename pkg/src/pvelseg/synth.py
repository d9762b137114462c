"""Synthetic electroluminescence cell renderer with ground-truth defect masks.

Cells are unit-scale images: a bright textured body, dark vertical busbars,
and darkened rounded corners. Defects darken pixels multiplicatively and the
ground-truth mask is exactly the set of changed pixels.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .images import load_grayscale, load_mask_png, rescale_unit, save_mask_png, save_png

log = logging.getLogger(__name__)

BUSBAR_LEVEL = 0.3     # busbar intensity as a fraction of background_level
CORNER_LEVEL = 0.15    # rounded-corner intensity as a fraction of background_level
TEXTURE_SMOOTH = 5     # moving-average window that band-limits the texture noise

DEFECT_KINDS = ("crack", "dead_patch", "degradation")


@dataclass(frozen=True)
class CellSpec:
    """Deterministic description of one defect-free cell."""

    width: int = 64
    height: int = 64
    busbar_count: int = 3
    busbar_width: int = 3
    background_level: float = 0.75
    texture_amplitude: float = 0.05
    corner_rounding: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.width < 8 or self.height < 8:
            raise ValueError("cells must be at least 8x8")
        if self.busbar_count < 0 or self.busbar_width < 1:
            raise ValueError("busbar_count must be >= 0 and busbar_width >= 1")
        if self.busbar_count * self.busbar_width >= self.width:
            raise ValueError("busbars would cover the whole cell")
        if not 0.0 < self.background_level <= 1.0:
            raise ValueError("background_level must be in (0, 1]")
        if not 0.0 <= self.texture_amplitude < self.background_level:
            raise ValueError("texture_amplitude must be in [0, background_level)")
        if self.corner_rounding < 0 or 2 * self.corner_rounding > min(self.width, self.height):
            raise ValueError("corner_rounding too large for the cell")


@dataclass(frozen=True)
class DefectSpec:
    """One defect: kind, darkening severity, and the seed of its geometry.

    size is a kind-specific scale in pixels (crack stroke width, dead-patch
    disk radius, degradation falloff); None picks a default from the cell size.
    """

    kind: str
    severity: float
    seed: int = 0
    size: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in DEFECT_KINDS:
            raise ValueError(f"unknown defect kind {self.kind!r}, expected one of {DEFECT_KINDS}")
        if not 0.0 < self.severity <= 1.0:
            raise ValueError("severity must be in (0, 1]")
        if self.size is not None and self.size <= 0:
            raise ValueError("size must be positive")


@dataclass
class LabeledImage:
    """A rendered cell with its ground-truth defect mask and provenance."""

    image: np.ndarray
    mask: np.ndarray
    cell: CellSpec
    defects: tuple[DefectSpec, ...] = ()

    def __post_init__(self) -> None:
        if self.image.shape != self.mask.shape:
            raise ValueError("image and mask dimensions must match")

    @property
    def defective(self) -> bool:
        return bool(self.mask.any())


def busbar_centers(width: int, count: int) -> list[int]:
    """Column centers of evenly spaced vertical busbars."""
    return [int(round((i + 1) * width / (count + 1))) for i in range(count)]


def generate_cell(spec: CellSpec) -> LabeledImage:
    """Render a defect-free cell; identical specs yield identical images."""
    h, w = spec.height, spec.width
    img = np.full((h, w), spec.background_level, dtype=np.float64)

    if spec.texture_amplitude > 0.0:
        rng = np.random.default_rng(spec.seed)
        noise = rng.uniform(-1.0, 1.0, size=(h, w))
        noise = uniform_filter(noise, size=TEXTURE_SMOOTH, mode="reflect")
        img += spec.texture_amplitude * noise

    for center in busbar_centers(w, spec.busbar_count):
        start = max(0, center - spec.busbar_width // 2)
        img[:, start : start + spec.busbar_width] = spec.background_level * BUSBAR_LEVEL

    r = spec.corner_rounding
    if r > 0:
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        corner_level = spec.background_level * CORNER_LEVEL
        for cy, cx in ((r, r), (r, w - 1 - r), (h - 1 - r, r), (h - 1 - r, w - 1 - r)):
            quadrant = ((yy < r) if cy == r else (yy > h - 1 - r)) & \
                       ((xx < r) if cx == r else (xx > w - 1 - r))
            outside = (yy - cy) ** 2 + (xx - cx) ** 2 > r * r
            img[quadrant & outside] = corner_level

    img = np.clip(img, 0.0, 1.0)
    return LabeledImage(image=img, mask=np.zeros((h, w), dtype=bool), cell=spec)


def _default_size(kind: str, shape: tuple[int, int]) -> float:
    scale = min(shape)
    if kind == "crack":
        return max(2.0, 0.12 * scale)
    if kind == "dead_patch":
        return max(3.0, 0.16 * scale)
    return max(4.0, 0.20 * scale)


def _crack_region(shape: tuple[int, int], width: float, rng: np.random.Generator,
                  inset: float) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    lo = np.array([inset, inset])
    hi = np.array([w - 1 - inset, h - 1 - inset])
    n_seg = int(rng.integers(3, 6))
    pos = rng.uniform(lo, hi)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    points = [pos]
    for _ in range(n_seg):
        angle += rng.uniform(-0.7, 0.7)
        length = rng.uniform(0.20, 0.35) * min(h, w)
        pos = np.clip(pos + length * np.array([np.cos(angle), np.sin(angle)]), lo, hi)
        points.append(pos)

    region = np.zeros(shape, dtype=bool)
    half = width / 2.0
    for (x1, y1), (x2, y2) in zip(points[:-1], points[1:]):
        dx, dy = x2 - x1, y2 - y1
        seg_len2 = dx * dx + dy * dy
        if seg_len2 == 0.0:
            d2 = (xx - x1) ** 2 + (yy - y1) ** 2
        else:
            t = np.clip(((xx - x1) * dx + (yy - y1) * dy) / seg_len2, 0.0, 1.0)
            d2 = (xx - (x1 + t * dx)) ** 2 + (yy - (y1 + t * dy)) ** 2
        region |= d2 <= half * half
    return region


def _patch_region(shape: tuple[int, int], radius: float, rng: np.random.Generator,
                  inset: float) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    lo = np.array([inset + radius, inset + radius])
    hi = np.array([max(lo[0], w - 1 - inset - radius), max(lo[1], h - 1 - inset - radius)])
    center = rng.uniform(lo, hi)
    region = np.zeros(shape, dtype=bool)
    for _ in range(int(rng.integers(3, 7))):
        r = radius * rng.uniform(0.55, 1.0)
        region |= (xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= r * r
        # step less than the current radius so consecutive disks overlap
        center = np.clip(center + rng.uniform(-0.8, 0.8, size=2) * r, lo, hi)
    return region


def _degradation_profile(shape: tuple[int, int], sigma: float, rng: np.random.Generator,
                         inset: float) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    lo = np.array([inset, inset])
    hi = np.array([w - 1 - inset, h - 1 - inset])
    center = rng.uniform(lo, hi)
    d2 = (xx - center[0]) ** 2 + (yy - center[1]) ** 2
    bump = np.exp(-d2 / (2.0 * sigma * sigma))
    # subtract a floor so the profile has compact support instead of
    # perturbing (and therefore labeling) every pixel in the cell
    cut = 0.05
    return np.clip((bump - cut) / (1.0 - cut), 0.0, None)


def apply_defects(cell: LabeledImage, defects: list[DefectSpec] | tuple[DefectSpec, ...],
                  inset: float = 0.0) -> LabeledImage:
    """Darken the cell by each defect in order and label the changed pixels.

    The input must be defect-free. Darkening is multiplicative: a pixel under
    a defect of severity s becomes value*(1-s), so severity 1 carves it to 0.
    inset keeps defect geometry at least that many pixels from the border.
    """
    if cell.mask.any():
        raise ValueError("apply_defects expects a defect-free cell")
    img = cell.image.copy()
    for spec in defects:
        rng = np.random.default_rng(spec.seed)
        size = spec.size if spec.size is not None else _default_size(spec.kind, img.shape)
        if spec.kind == "crack":
            region = _crack_region(img.shape, size, rng, inset)
            img[region] *= 1.0 - spec.severity
        elif spec.kind == "dead_patch":
            region = _patch_region(img.shape, size, rng, inset)
            img[region] *= 1.0 - spec.severity
        else:
            profile = _degradation_profile(img.shape, size, rng, inset)
            img *= 1.0 - spec.severity * profile
    mask = img != cell.image
    return LabeledImage(image=img, mask=mask, cell=cell.cell,
                        defects=cell.defects + tuple(defects))


def generate_dataset(count: int, defect_rate: float, base: CellSpec, seed: int,
                     kinds: tuple[str, ...] = DEFECT_KINDS,
                     inset: float = 0.0) -> list[LabeledImage]:
    """Render count cells; each is defective with probability defect_rate.

    Per-cell texture seeds, defect draws, and defect geometry all derive from
    the single dataset seed, so the same arguments reproduce the same data.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if not 0.0 <= defect_rate <= 1.0:
        raise ValueError("defect_rate must be in [0, 1]")
    for kind in kinds:
        if kind not in DEFECT_KINDS:
            raise ValueError(f"unknown defect kind {kind!r}")
    master = np.random.default_rng(seed)
    cells = []
    for _ in range(count):
        spec = replace(base, seed=int(master.integers(0, 2**31 - 1)))
        cell = generate_cell(spec)
        if master.random() < defect_rate:
            n_defects = 1 + int(master.random() < 0.3)
            defects = []
            for _ in range(n_defects):
                defects.append(DefectSpec(
                    kind=kinds[int(master.integers(0, len(kinds)))],
                    severity=float(master.uniform(0.6, 0.9)),
                    seed=int(master.integers(0, 2**31 - 1)),
                ))
            cell = apply_defects(cell, defects, inset=inset)
        cells.append(cell)
    return cells


def save_dataset(cells: list[LabeledImage], outdir: str | Path) -> Path:
    """Write image/mask PNG pairs plus a JSON manifest; returns the manifest path."""
    outdir = Path(outdir)
    (outdir / "images").mkdir(parents=True, exist_ok=True)
    (outdir / "masks").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, cell in enumerate(cells):
        image_rel = f"images/cell_{i:04d}.png"
        mask_rel = f"masks/cell_{i:04d}.png"
        save_png(cell.image, outdir / image_rel)
        save_mask_png(cell.mask, outdir / mask_rel)
        entries.append({
            "image": image_rel,
            "mask": mask_rel,
            "defective": cell.defective,
            "cell": asdict(cell.cell),
            "defects": [asdict(d) for d in cell.defects],
        })
    manifest = outdir / "manifest.json"
    manifest.write_text(json.dumps({"count": len(cells), "entries": entries},
                                   indent=2, sort_keys=True), encoding="utf-8")
    return manifest


def load_dataset(outdir: str | Path) -> list[LabeledImage]:
    """Load a dataset written by save_dataset (images come back unit-scale)."""
    outdir = Path(outdir)
    manifest = json.loads((outdir / "manifest.json").read_text(encoding="utf-8"))
    cells = []
    for entry in manifest["entries"]:
        image = rescale_unit(load_grayscale(outdir / entry["image"]))
        mask = load_mask_png(outdir / entry["mask"])
        cells.append(LabeledImage(
            image=image,
            mask=mask,
            cell=CellSpec(**entry["cell"]),
            defects=tuple(DefectSpec(**d) for d in entry["defects"]),
        ))
    return cells
