"""Report artifacts: matplotlib figures rendered to files plus CSV metrics."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .autoenc.train import TrainReport
from .geometry import Polygon


def write_loss_curve(report: TrainReport, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    epochs = np.arange(1, len(report.train_losses) + 1)
    ax.plot(epochs, report.train_losses, label="train loss")
    if report.validations:
        v_epochs, v_losses = zip(*report.validations)
        ax.plot(v_epochs, v_losses, "o-", label="validation loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("negative mean SSIM")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_iou_histogram(ious: list[float], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(ious, bins=np.linspace(0.0, 1.0, 21), edgecolor="black")
    ax.set_xlabel("IoU against ground truth")
    ax.set_ylabel("images")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_disparity_figure(disparity: np.ndarray, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    im = ax.imshow(disparity, cmap="magma", vmin=0.0, vmax=float(disparity.max()) or 1.0)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_overlay_figure(image: np.ndarray, polygons: list[Polygon],
                         path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(image, cmap="gray", vmin=0.0, vmax=1.0)
    for poly in polygons:
        ring = np.vstack([poly.vertices, poly.vertices[:1]])
        ax.plot(ring[:, 0], ring[:, 1], color="red", linewidth=1.2)
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_csv(rows: list[dict], path: str | Path) -> None:
    """Write dict rows with a header; column order follows the first row."""
    if not rows:
        Path(path).write_text("", encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
