"""End-to-end orchestration: image -> disparity -> mask -> polygons -> record.

Inference and evaluation work in model-input space: images are resized to
the autoencoder's input size first, and all masks, polygons, and exported
annotations use those pixel coordinates.
"""

from __future__ import annotations

import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import images as img_ops
from . import ssim
from .annotate import AnnotationRecord, CostModel, DegenerateShape, cost_per_image, mask_iou, rasterize
from .autoenc.model import Model
from .cluster import DbscanParams, dbscan
from .config import PipelineConfig
from .geometry import DegenerateGeometryError, Polygon, alpha_shape, classify_degenerate
from .review.store import AnnotationStore
from .segment import (ThresholdConfig, adaptive_mean_threshold, clean_noise,
                      combine_masks, detect_busbars, disparity_intensity,
                      mask_to_points, otsu_threshold)

log = logging.getLogger(__name__)

DETECTION_IOU = 0.5


def loss_params(cfg: PipelineConfig) -> ssim.SsimParams:
    return ssim.SsimParams(window_size=cfg.ssim_loss_window, k1=cfg.ssim_loss_k1,
                           k2=cfg.ssim_loss_k2, dynamic_range=1.0)


def disparity_params(cfg: PipelineConfig) -> ssim.SsimParams:
    return ssim.SsimParams(window_size=cfg.ssim_disparity_window,
                           k1=cfg.ssim_disparity_k1, k2=cfg.ssim_disparity_k2,
                           dynamic_range=1.0)


@dataclass
class InferenceResult:
    record: AnnotationRecord
    disparity: np.ndarray
    mask: np.ndarray
    image: np.ndarray
    seconds: float


def segment_disparity(disparity: np.ndarray, original: np.ndarray,
                      cfg: PipelineConfig) -> np.ndarray:
    """Threshold a disparity map and clean structural noise from it."""
    _, otsu_mask = otsu_threshold(disparity)
    thr = ThresholdConfig(adaptive_block=cfg.threshold_adaptive_block,
                          adaptive_c=cfg.threshold_adaptive_c,
                          combine_mode=cfg.threshold_combine)
    adaptive_mask = adaptive_mean_threshold(disparity, thr)
    combined = combine_masks(otsu_mask, adaptive_mask, cfg.threshold_combine)
    layout = detect_busbars(original, expected_count=cfg.busbar_expected_count,
                            border_margin_frac=cfg.busbar_border_margin_frac,
                            horizontal_count=cfg.busbar_horizontal_count)
    return clean_noise(combined, layout, band_pad=cfg.busbar_band_pad)


def polygons_from_mask(mask: np.ndarray, cfg: PipelineConfig
                       ) -> tuple[list[Polygon], list[DegenerateShape]]:
    """Cluster mask pixels and outline each cluster with an alpha shape."""
    points = mask_to_points(mask)
    polygons: list[Polygon] = []
    degenerates: list[DegenerateShape] = []
    if len(points) == 0:
        return polygons, degenerates
    clustered = dbscan(points, DbscanParams(epsilon=cfg.dbscan_epsilon,
                                            min_pts=cfg.dbscan_min_pts))
    for cluster_points in clustered.clusters():
        try:
            polys = alpha_shape(cluster_points, cfg.alpha_value)
        except DegenerateGeometryError:
            shape = classify_degenerate(cluster_points)
            if shape is not None:
                kind, pts = shape
                degenerates.append(DegenerateShape(kind=kind, points=pts.tolist()))
            continue
        if not polys:
            log.info("cluster of %d points produced no polygon at alpha=%g",
                     len(cluster_points), cfg.alpha_value)
        polygons.extend(polys)
    return polygons, degenerates


def infer_image(model: Model, image: np.ndarray, image_id: str, source_path: str,
                cfg: PipelineConfig) -> InferenceResult:
    """Annotate one preprocessed unit-scale image."""
    t0 = time.perf_counter()
    recon = model.reconstruct(image)
    smap = ssim.ssim_map(image, recon, disparity_params(cfg))
    disparity = disparity_intensity(smap)
    mask = segment_disparity(disparity, image, cfg)
    polygons, degenerates = polygons_from_mask(mask, cfg)
    h, w = image.shape
    record = AnnotationRecord(image_id=image_id, source_path=source_path,
                              width=w, height=h, polygons=polygons,
                              degenerates=degenerates)
    return InferenceResult(record=record, disparity=disparity, mask=mask,
                           image=image, seconds=time.perf_counter() - t0)


def _png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    from PIL import Image as PilImage

    quant = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    PilImage.fromarray(quant, mode="L").save(buf, format="PNG")
    return buf.getvalue()


@dataclass
class InferSummary:
    processed: int = 0
    failed: list[str] = field(default_factory=list)
    t_inference_mean: float = 0.0
    results: list[InferenceResult] = field(default_factory=list)


def run_infer(model: Model, image_paths: list[Path], store_dir: str | Path,
              cfg: PipelineConfig, workers: int = 1,
              keep_results: bool = False) -> InferSummary:
    """Annotate a batch of image files into a review store.

    Images are processed in input order (a worker pool fans out the
    per-image work); one bad image is logged and skipped rather than
    aborting the batch.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    in_h, in_w, _ = model.input_shape
    store = AnnotationStore(store_dir)
    summary = InferSummary()
    timings: list[float] = []

    def work(path: Path):
        raw = img_ops.load_grayscale(path)
        unit = img_ops.preprocess(raw, in_w, in_h)
        return infer_image(model, unit, path.stem, path.name, cfg)

    def run_one(path: Path):
        try:
            return work(path)
        except Exception as exc:
            log.error("inference failed for %s: %s", path, exc)
            return exc

    if workers == 1:
        outcomes = [run_one(p) for p in image_paths]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_one, image_paths))

    for path, outcome in zip(image_paths, outcomes):
        if isinstance(outcome, Exception):
            summary.failed.append(str(path))
            continue
        store.add(outcome.record, image_png=_png_bytes(outcome.image))
        timings.append(outcome.seconds)
        summary.processed += 1
        if keep_results:
            summary.results.append(outcome)

    summary.t_inference_mean = float(np.mean(timings)) if timings else 0.0
    store.write_manifest_meta({
        "n_images": summary.processed,
        "t_inference_mean": summary.t_inference_mean,
        "t_revision_assumed": cfg.cost_t_revision,
        "t_tuning": cfg.cost_t_tuning,
    })
    return summary


@dataclass
class EvalRow:
    image_id: str
    defective: bool
    iou: float
    n_polygons: int
    detected: bool


@dataclass
class EvalSummary:
    rows: list[EvalRow]
    mean_iou_defective: float
    recall_at_half: float
    zero_polygon_rate_clean: float
    cost: CostModel | None
    cost_seconds: float | None

    def to_dict(self) -> dict:
        return {
            "n_images": len(self.rows),
            "mean_iou_defective": self.mean_iou_defective,
            "recall_at_half": self.recall_at_half,
            "zero_polygon_rate_clean": self.zero_polygon_rate_clean,
            "cost_seconds_per_image": self.cost_seconds,
        }


def evaluate_records(records: list[AnnotationRecord],
                     truth_masks: dict[str, np.ndarray],
                     cost: CostModel | None = None) -> EvalSummary:
    """Score records against ground-truth masks.

    A defective image counts as detected when the rasterized polygon union
    reaches IoU 0.5 with its truth mask; defect-free images count as clean
    when the record has no polygons.
    """
    rows = []
    for rec in records:
        if rec.image_id not in truth_masks:
            raise ValueError(f"no ground truth for {rec.image_id!r}")
        truth = truth_masks[rec.image_id]
        if truth.shape != (rec.height, rec.width):
            raise ValueError(f"{rec.image_id!r}: truth mask {truth.shape} does not "
                             f"match record {(rec.height, rec.width)}")
        predicted = rasterize(rec.polygons, rec.width, rec.height)
        iou = mask_iou(predicted, truth)
        defective = bool(truth.any())
        rows.append(EvalRow(
            image_id=rec.image_id,
            defective=defective,
            iou=iou,
            n_polygons=len(rec.polygons),
            detected=defective and iou >= DETECTION_IOU,
        ))
    defective_rows = [r for r in rows if r.defective]
    clean_rows = [r for r in rows if not r.defective]
    mean_iou = float(np.mean([r.iou for r in defective_rows])) if defective_rows else 0.0
    recall = (sum(r.detected for r in defective_rows) / len(defective_rows)
              if defective_rows else 0.0)
    clean_rate = (sum(r.n_polygons == 0 for r in clean_rows) / len(clean_rows)
                  if clean_rows else 1.0)
    return EvalSummary(
        rows=rows,
        mean_iou_defective=mean_iou,
        recall_at_half=float(recall),
        zero_polygon_rate_clean=float(clean_rate),
        cost=cost,
        cost_seconds=cost_per_image(cost) if cost else None,
    )
