"""Annotation records, COCO/VOC export, rasterization, and the cost model.

Polygon coordinates use the lattice convention: mask pixel (row i, col j)
corresponds to the point x=j, y=i.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import PurePosixPath

import numpy as np

from .geometry import Polygon
from .images import require_mask

POLYGON_NS = "urn:pvelseg:polygon"
ET.register_namespace("pv", POLYGON_NS)

VALID_STATUSES = ("silver", "gold", "rejected")
# silver annotations are machine output; reviewers promote or reject them,
# and promoted (gold) annotations may be re-edited.
ALLOWED_TRANSITIONS = {("silver", "gold"), ("silver", "rejected"), ("gold", "gold")}

COORD_DECIMALS = 6


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def is_valid_transition(old: str, new: str) -> bool:
    return (old, new) in ALLOWED_TRANSITIONS


@dataclass
class DegenerateShape:
    """A cluster too thin to outline: a single point or a collinear segment."""

    kind: str
    points: list[list[float]]

    def __post_init__(self) -> None:
        if self.kind not in ("point", "segment"):
            raise ValueError(f"kind must be point or segment, got {self.kind!r}")
        expected = 1 if self.kind == "point" else 2
        if len(self.points) != expected:
            raise ValueError(f"{self.kind} needs {expected} point(s), got {len(self.points)}")


@dataclass
class AnnotationRecord:
    """One image's machine annotations plus review state."""

    image_id: str
    source_path: str
    width: int
    height: int
    polygons: list[Polygon] = field(default_factory=list)
    degenerates: list[DegenerateShape] = field(default_factory=list)
    status: str = "silver"
    reviewer_note: str = ""
    created_at: str = field(default_factory=utc_now)
    updated_at: str = field(default_factory=utc_now)
    version: int = 1

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if self.status not in VALID_STATUSES:
            raise ValueError(f"status must be one of {VALID_STATUSES}, got {self.status!r}")
        for poly in self.polygons:
            _check_bounds(poly, self.width, self.height, self.image_id)

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "source_path": self.source_path,
            "width": self.width,
            "height": self.height,
            "polygons": [[[float(x), float(y)] for x, y in p.vertices] for p in self.polygons],
            "degenerates": [{"kind": d.kind, "points": d.points} for d in self.degenerates],
            "status": self.status,
            "reviewer_note": self.reviewer_note,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationRecord":
        return cls(
            image_id=data["image_id"],
            source_path=data["source_path"],
            width=int(data["width"]),
            height=int(data["height"]),
            polygons=[Polygon(np.asarray(v, dtype=np.float64)) for v in data["polygons"]],
            degenerates=[DegenerateShape(**d) for d in data.get("degenerates", [])],
            status=data.get("status", "silver"),
            reviewer_note=data.get("reviewer_note", ""),
            created_at=data.get("created_at", utc_now()),
            updated_at=data.get("updated_at", utc_now()),
            version=int(data.get("version", 1)),
        )


def _check_bounds(poly: Polygon, width: int, height: int, image_id: str) -> None:
    mn_x, mn_y, mx_x, mx_y = poly.bbox()
    eps = 1e-9
    if mn_x < -eps or mn_y < -eps or mx_x > width - 1 + eps or mx_y > height - 1 + eps:
        raise ValueError(f"record {image_id!r}: polygon exceeds image bounds "
                         f"({mn_x}, {mn_y})..({mx_x}, {mx_y}) vs {width}x{height}")


def _round6(value: float) -> float:
    return round(float(value), COORD_DECIMALS)


def to_coco(records: list[AnnotationRecord]) -> str:
    """Serialize records as a COCO instance-segmentation document.

    Output is byte-stable: sorted keys, compact separators, coordinates
    rounded to 6 decimals. Records are ordered by image_id; degenerate
    shapes are review-only and not exported.
    """
    ordered = sorted(records, key=lambda r: r.image_id)
    seen: set[str] = set()
    for rec in ordered:
        if rec.image_id in seen:
            raise ValueError(f"duplicate image_id {rec.image_id!r}")
        seen.add(rec.image_id)
    images = []
    annotations = []
    ann_id = 1
    for img_num, rec in enumerate(ordered, start=1):
        images.append({
            "id": img_num,
            "file_name": rec.source_path,
            "width": rec.width,
            "height": rec.height,
        })
        for poly in rec.polygons:
            _check_bounds(poly, rec.width, rec.height, rec.image_id)
            mn_x, mn_y, mx_x, mx_y = poly.bbox()
            flat = [_round6(c) for xy in poly.vertices for c in xy]
            annotations.append({
                "id": ann_id,
                "image_id": img_num,
                "category_id": 1,
                "segmentation": [flat],
                "area": _round6(poly.area),
                "bbox": [_round6(mn_x), _round6(mn_y),
                         _round6(mx_x - mn_x), _round6(mx_y - mn_y)],
                "iscrowd": 0,
            })
            ann_id += 1
    doc = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "defect", "supercategory": "defect"}],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def parse_coco(text: str) -> list[AnnotationRecord]:
    """Rebuild records from a COCO document produced by to_coco."""
    doc = json.loads(text)
    by_image: dict[int, AnnotationRecord] = {}
    for img in doc["images"]:
        file_name = img["file_name"]
        by_image[img["id"]] = AnnotationRecord(
            image_id=PurePosixPath(file_name).stem,
            source_path=file_name,
            width=int(img["width"]),
            height=int(img["height"]),
        )
    for ann in doc["annotations"]:
        rec = by_image[ann["image_id"]]
        for flat in ann["segmentation"]:
            verts = np.asarray(flat, dtype=np.float64).reshape(-1, 2)
            rec.polygons.append(Polygon(verts))
    return list(by_image.values())


def _sub(parent: ET.Element, tag: str, text: str | None = None) -> ET.Element:
    el = ET.SubElement(parent, tag)
    if text is not None:
        el.text = text
    return el


def to_voc(record: AnnotationRecord) -> str:
    """Serialize one record as a PascalVOC annotation document.

    Each polygon becomes an object whose bndbox is the integer-rounded
    polygon envelope; the exact vertices ride along in a namespaced
    extension element that plain VOC consumers ignore.
    """
    path = PurePosixPath(record.source_path)
    root = ET.Element("annotation")
    _sub(root, "folder", str(path.parent) if str(path.parent) != "." else "images")
    _sub(root, "filename", path.name)
    size = _sub(root, "size")
    _sub(size, "width", str(record.width))
    _sub(size, "height", str(record.height))
    _sub(size, "depth", "1")
    _sub(root, "segmented", "1" if record.polygons else "0")
    for poly in record.polygons:
        _check_bounds(poly, record.width, record.height, record.image_id)
        obj = _sub(root, "object")
        _sub(obj, "name", "defect")
        _sub(obj, "pose", "Unspecified")
        _sub(obj, "truncated", "0")
        _sub(obj, "difficult", "0")
        mn_x, mn_y, mx_x, mx_y = poly.bbox()
        bnd = _sub(obj, "bndbox")
        _sub(bnd, "xmin", str(int(round(mn_x))))
        _sub(bnd, "ymin", str(int(round(mn_y))))
        _sub(bnd, "xmax", str(int(round(mx_x))))
        _sub(bnd, "ymax", str(int(round(mx_y))))
        poly_el = _sub(obj, f"{{{POLYGON_NS}}}polygon")
        for x, y in poly.vertices:
            pt = _sub(poly_el, f"{{{POLYGON_NS}}}pt")
            _sub(pt, f"{{{POLYGON_NS}}}x", repr(_round6(x)))
            _sub(pt, f"{{{POLYGON_NS}}}y", repr(_round6(y)))
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def load_voc_schema() -> dict:
    """The bundled structural schema for VOC annotation documents."""
    text = resources.files("pvelseg").joinpath("data/voc_schema.json").read_text("utf-8")
    return json.loads(text)


def validate_voc(xml_text: str, schema: dict | None = None) -> list[str]:
    """Check a VOC document against the bundled schema; returns error strings."""
    if schema is None:
        schema = load_voc_schema()
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        return [f"not well-formed: {exc}"]
    errors: list[str] = []
    if root.tag != schema["root"]:
        errors.append(f"root element is {root.tag!r}, expected {schema['root']!r}")
        return errors
    _validate_element(root, schema["elements"], errors)
    return errors


def _validate_element(el: ET.Element, elements: dict, errors: list[str]) -> None:
    rule = elements.get(el.tag)
    if rule is None:
        errors.append(f"unexpected element {el.tag!r}")
        return
    if "children" in rule:
        _validate_sequence(el, rule["children"], errors)
        for child in el:
            _validate_element(child, elements, errors)
    else:
        if len(el):
            errors.append(f"{el.tag!r} must not have child elements")
        _validate_text(el, rule.get("text", "string"), errors)


def _validate_sequence(el: ET.Element, spec: list, errors: list[str]) -> None:
    children = list(el)
    pos = 0
    for name, min_occurs, max_occurs in spec:
        count = 0
        while pos < len(children) and children[pos].tag == name:
            count += 1
            pos += 1
            if max_occurs is not None and count > max_occurs:
                errors.append(f"{el.tag!r}: too many {name!r} children")
                return
        if count < min_occurs:
            errors.append(f"{el.tag!r}: expected at least {min_occurs} {name!r}, got {count}")
            return
    if pos != len(children):
        errors.append(f"{el.tag!r}: unexpected child {children[pos].tag!r}")


def _validate_text(el: ET.Element, kind: str, errors: list[str]) -> None:
    text = el.text or ""
    if kind == "int":
        try:
            int(text.strip())
        except ValueError:
            errors.append(f"{el.tag!r}: expected an integer, got {text!r}")
    elif kind == "float":
        try:
            float(text.strip())
        except ValueError:
            errors.append(f"{el.tag!r}: expected a number, got {text!r}")
    elif text.strip() == "":
        errors.append(f"{el.tag!r}: expected non-empty text")


def rasterize(polygons: list[Polygon], width: int, height: int) -> np.ndarray:
    """Fill polygons onto a (height, width) mask.

    A pixel is set when its lattice point is strictly inside (even-odd rule)
    or exactly on a polygon boundary; boundary inclusion makes a polygon
    traced over mask pixels cover those pixels when filled back.
    """
    if width < 1 or height < 1:
        raise ValueError("mask dimensions must be positive")
    mask = np.zeros((height, width), dtype=bool)
    for poly in polygons:
        verts = poly.vertices
        x0 = max(0, int(np.floor(verts[:, 0].min())))
        x1 = min(width - 1, int(np.ceil(verts[:, 0].max())))
        y0 = max(0, int(np.floor(verts[:, 1].min())))
        y1 = min(height - 1, int(np.ceil(verts[:, 1].max())))
        if x1 < x0 or y1 < y0:
            continue
        xs = np.arange(x0, x1 + 1, dtype=np.float64)
        ys = np.arange(y0, y1 + 1, dtype=np.float64)
        gx, gy = np.meshgrid(xs, ys)
        inside = np.zeros(gx.shape, dtype=bool)
        on_edge = np.zeros(gx.shape, dtype=bool)
        scale = max(1.0, float(np.abs(verts).max()))
        tol = 1e-9 * scale
        n = len(verts)
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            crosses = (ay > gy) != (by > gy)
            if np.any(crosses):
                x_hit = ax + (gy - ay) * (bx - ax) / (by - ay)
                inside ^= crosses & (gx < x_hit)
            cross = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
            within = ((gx >= min(ax, bx) - tol) & (gx <= max(ax, bx) + tol)
                      & (gy >= min(ay, by) - tol) & (gy <= max(ay, by) + tol))
            on_edge |= (np.abs(cross) <= tol * scale) & within
        mask[y0 : y1 + 1, x0 : x1 + 1] |= inside | on_edge
    return mask


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two same-shape masks; two empty masks give 1."""
    a = require_mask(a, "mask a")
    b = require_mask(b, "mask b")
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


@dataclass(frozen=True)
class CostModel:
    """Per-image annotation cost: inference plus review plus amortized tuning."""

    t_inference: float
    t_revision: float
    t_tuning: float
    n_images: int

    def __post_init__(self) -> None:
        if min(self.t_inference, self.t_revision, self.t_tuning) < 0:
            raise ValueError("times must be non-negative")
        if self.n_images < 1:
            raise ValueError("n_images must be at least 1")


def cost_per_image(model: CostModel) -> float:
    """Seconds per annotated image with tuning amortized over the batch."""
    return model.t_inference + model.t_revision + model.t_tuning / model.n_images
