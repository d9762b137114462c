"""Density-based clustering of defect pixels.

Two implementations with identical semantics: dbscan (uniform-grid neighbor
index) and dbscan_reference (brute-force, small inputs only). Neighborhoods
are strict (distance < epsilon) and include the point itself; border points
belong to the first cluster that expands over them; expansion is FIFO from
seeds taken in input order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

UNVISITED = -2
OUTLIER_LABEL = -1

REFERENCE_LIMIT = 5000


class PointRole(IntEnum):
    OUTLIER = 0
    BORDER = 1
    CORE = 2


@dataclass(frozen=True)
class DbscanParams:
    epsilon: float = 10.0
    min_pts: int = 100

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be at least 1, got {self.min_pts}")


# Tuned full-resolution preset and the broader starting point it was tuned from.
TUNED_PRESET = DbscanParams(epsilon=10.0, min_pts=100)
BROAD_PRESET = DbscanParams(epsilon=30.0, min_pts=100)


@dataclass
class ClusterSet:
    """Clustering result: per-point labels (OUTLIER_LABEL for noise) and roles."""

    points: np.ndarray
    labels: np.ndarray
    roles: np.ndarray

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def cluster_indices(self, label: int) -> np.ndarray:
        return np.nonzero(self.labels == label)[0]

    def clusters(self) -> list[np.ndarray]:
        """Point coordinates per cluster, ordered by label."""
        return [self.points[self.cluster_indices(lbl)] for lbl in range(self.n_clusters)]

    def outlier_indices(self) -> np.ndarray:
        return np.nonzero(self.labels == OUTLIER_LABEL)[0]

    def partition(self) -> tuple[frozenset[frozenset[int]], frozenset[int]]:
        """Label-permutation-invariant view: cluster index sets plus outlier set."""
        groups = frozenset(frozenset(self.cluster_indices(lbl).tolist())
                           for lbl in range(self.n_clusters))
        return groups, frozenset(self.outlier_indices().tolist())


def _check_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must be shaped (n, 2), got {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError("points must be finite")
    return pts


class _GridIndex:
    """Uniform grid with cell size epsilon; neighbors live in the 3x3 block."""

    def __init__(self, points: np.ndarray, epsilon: float):
        self.points = points
        self.eps2 = epsilon * epsilon
        self.cells: dict[tuple[int, int], list[int]] = {}
        keys = np.floor(points / epsilon).astype(np.int64)
        for i, (cx, cy) in enumerate(keys):
            self.cells.setdefault((int(cx), int(cy)), []).append(i)
        self.keys = keys

    def neighbors(self, i: int) -> np.ndarray:
        cx, cy = self.keys[i]
        candidates: list[int] = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                candidates.extend(self.cells.get((int(cx) + dx, int(cy) + dy), ()))
        cand = np.asarray(candidates, dtype=np.intp)
        diff = self.points[cand] - self.points[i]
        close = (diff * diff).sum(axis=1) < self.eps2
        return cand[close]


def _expand(labels: np.ndarray, roles: np.ndarray, neighbor_fn, n: int,
            min_pts: int) -> None:
    """Shared clustering loop: seeds in input order, FIFO frontier."""
    next_label = 0
    for seed in range(n):
        if labels[seed] != UNVISITED:
            continue
        seed_neighbors = neighbor_fn(seed)
        if len(seed_neighbors) < min_pts:
            labels[seed] = OUTLIER_LABEL
            continue
        labels[seed] = next_label
        roles[seed] = PointRole.CORE
        queue = deque(int(j) for j in seed_neighbors)
        while queue:
            j = queue.popleft()
            if labels[j] == OUTLIER_LABEL:
                # previously found non-core; the first expanding cluster claims it
                labels[j] = next_label
                roles[j] = PointRole.BORDER
                continue
            if labels[j] != UNVISITED:
                continue
            labels[j] = next_label
            j_neighbors = neighbor_fn(j)
            if len(j_neighbors) >= min_pts:
                roles[j] = PointRole.CORE
                queue.extend(int(k) for k in j_neighbors)
            else:
                roles[j] = PointRole.BORDER
        next_label += 1


def dbscan(points: np.ndarray, params: DbscanParams) -> ClusterSet:
    """Cluster 2-D points; deterministic for a fixed input order."""
    pts = _check_points(points)
    n = len(pts)
    labels = np.full(n, UNVISITED, dtype=np.int64)
    roles = np.full(n, PointRole.OUTLIER, dtype=np.int8)
    if n:
        index = _GridIndex(pts, params.epsilon)
        _expand(labels, roles, index.neighbors, n, params.min_pts)
    return ClusterSet(points=pts, labels=labels, roles=roles)


def dbscan_reference(points: np.ndarray, params: DbscanParams) -> ClusterSet:
    """Brute-force implementation used to cross-check dbscan; capped input size."""
    pts = _check_points(points)
    n = len(pts)
    if n > REFERENCE_LIMIT:
        raise ValueError(f"reference implementation is capped at {REFERENCE_LIMIT} points")
    eps2 = params.epsilon ** 2
    adjacency: list[np.ndarray] = []
    for i in range(n):
        diff = pts - pts[i]
        adjacency.append(np.nonzero((diff * diff).sum(axis=1) < eps2)[0])
    labels = np.full(n, UNVISITED, dtype=np.int64)
    roles = np.full(n, PointRole.OUTLIER, dtype=np.int8)
    _expand(labels, roles, lambda i: adjacency[i], n, params.min_pts)
    return ClusterSet(points=pts, labels=labels, roles=roles)
