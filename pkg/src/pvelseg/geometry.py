"""Polygon extraction from point clusters: Delaunay, alpha shapes, hulls.

Coordinates are (x, y) pairs. Polygons are simple rings with vertices in
counterclockwise order and no consecutive collinear vertices.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay as _SciDelaunay
from scipy.spatial import QhullError

log = logging.getLogger(__name__)

# Relative tolerance for the circumradius cutoff so lattice-point shapes whose
# circumradius lands exactly on 1/alpha survive floating-point noise.
ALPHA_TIE_RTOL = 1e-9


class DegenerateGeometryError(ValueError):
    """Raised when points do not span a 2-D region (too few or collinear)."""


@dataclass
class Polygon:
    """Simple counterclockwise ring; the closing edge is implicit."""

    vertices: np.ndarray

    def __post_init__(self) -> None:
        verts = np.asarray(self.vertices, dtype=np.float64)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise ValueError(f"a polygon needs at least 3 (x, y) vertices, got {verts.shape}")
        self.vertices = verts
        if self.signed_area() <= 0:
            raise ValueError("polygon vertices must wind counterclockwise")

    def signed_area(self) -> float:
        x = self.vertices[:, 0]
        y = self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def area(self) -> float:
        return abs(self.signed_area())

    def bbox(self) -> tuple[float, float, float, float]:
        """Axis-aligned bounds as (min_x, min_y, max_x, max_y)."""
        mn = self.vertices.min(axis=0)
        mx = self.vertices.max(axis=0)
        return float(mn[0]), float(mn[1]), float(mx[0]), float(mx[1])

    def is_simple(self) -> bool:
        """True when no two non-adjacent edges intersect and no edge degenerates."""
        verts = self.vertices
        n = len(verts)
        edges = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
        for i in range(n):
            a1, a2 = edges[i]
            if np.array_equal(a1, a2):
                return False
            for j in range(i + 1, n):
                adjacent = j == i + 1 or (i == 0 and j == n - 1)
                if adjacent:
                    continue
                if _segments_intersect(a1, a2, *edges[j]):
                    return False
        return True


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, q, r) -> bool:
    """Collinear point q on segment pr (inclusive)."""
    return (min(p[0], r[0]) <= q[0] <= max(p[0], r[0])
            and min(p[1], r[1]) <= q[1] <= max(p[1], r[1]))


def _segments_intersect(a1, a2, b1, b2) -> bool:
    d1 = _orient(b1, b2, a1)
    d2 = _orient(b1, b2, a2)
    d3 = _orient(a1, a2, b1)
    d4 = _orient(a1, a2, b2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 \
            and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and _on_segment(b1, a1, b2):
        return True
    if d2 == 0 and _on_segment(b1, a2, b2):
        return True
    if d3 == 0 and _on_segment(a1, b1, a2):
        return True
    if d4 == 0 and _on_segment(a1, b2, a2):
        return True
    return False


@dataclass
class Triangulation:
    """Delaunay triangulation over deduplicated points; triangles wind CCW."""

    points: np.ndarray
    triangles: np.ndarray
    circumradii: np.ndarray


def dedupe_points(points: np.ndarray) -> np.ndarray:
    """Unique rows preserving first-occurrence order."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must be shaped (n, 2), got {pts.shape}")
    _, first = np.unique(pts, axis=0, return_index=True)
    return pts[np.sort(first)]


def classify_degenerate(points: np.ndarray) -> tuple[str, np.ndarray] | None:
    """Describe clusters that cannot form a polygon.

    Returns ('point', (1, 2) array) for a single location, ('segment',
    (2, 2) array of extreme points) for collinear clusters, or None when the
    points span a 2-D region.
    """
    unique = dedupe_points(points)
    if len(unique) == 0:
        raise ValueError("no points given")
    if len(unique) == 1:
        return "point", unique
    base = unique[0]
    direction = unique[1] - base
    cross = (unique[:, 0] - base[0]) * direction[1] - (unique[:, 1] - base[1]) * direction[0]
    scale = max(1.0, float(np.abs(unique).max()))
    if np.abs(cross).max() > 1e-9 * scale * scale:
        return None
    proj = (unique - base) @ direction
    return "segment", np.stack([unique[int(proj.argmin())], unique[int(proj.argmax())]])


def _circumradii(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = points[triangles[:, 0]]
    b = points[triangles[:, 1]]
    c = points[triangles[:, 2]]
    la = np.linalg.norm(b - c, axis=1)
    lb = np.linalg.norm(c - a, axis=1)
    lc = np.linalg.norm(a - b, axis=1)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    area2 = np.abs(cross)
    radii = np.full(len(triangles), np.inf)
    ok = area2 > 0
    radii[ok] = (la * lb * lc)[ok] / (2.0 * area2[ok])
    return radii


def delaunay(points: np.ndarray) -> Triangulation:
    """Delaunay triangulation of the deduplicated points, CCW simplices."""
    unique = dedupe_points(points)
    if len(unique) < 3:
        raise DegenerateGeometryError(f"need at least 3 unique points, got {len(unique)}")
    try:
        tri = _SciDelaunay(unique)
    except QhullError as exc:
        raise DegenerateGeometryError(f"points do not span a 2-D region: {exc}") from exc
    simplices = tri.simplices.copy()
    a = unique[simplices[:, 0]]
    b = unique[simplices[:, 1]]
    c = unique[simplices[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    flip = cross < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    return Triangulation(points=unique, triangles=simplices,
                         circumradii=_circumradii(unique, simplices))


def _boundary_edges(triangles: np.ndarray, keep: np.ndarray) -> list[tuple[int, int]]:
    """Directed edges owned by exactly one kept triangle (interior on the left)."""
    counts: dict[tuple[int, int], int] = {}
    directed: list[tuple[int, int]] = []
    for t in triangles[keep]:
        for u, v in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            key = (min(u, v), max(u, v))
            counts[key] = counts.get(key, 0) + 1
            directed.append((int(u), int(v)))
    return [(u, v) for u, v in directed if counts[(min(u, v), max(u, v))] == 1]


def _chain_rings(points: np.ndarray, edges: list[tuple[int, int]]) -> list[list[int]]:
    """Assemble directed boundary edges into closed rings.

    At a vertex with several outgoing edges (a pinch vertex), the walk takes
    the sharpest left turn relative to the incoming direction, which keeps
    each ring simple.
    """
    outgoing: dict[int, list[tuple[int, int]]] = {}
    for u, v in sorted(edges):
        outgoing.setdefault(u, []).append((u, v))
    unused = set(edges)
    rings: list[list[int]] = []
    for start_edge in sorted(edges):
        if start_edge not in unused:
            continue
        ring = [start_edge[0]]
        edge = start_edge
        unused.discard(edge)
        while edge[1] != start_edge[0]:
            u, v = edge
            candidates = [e for e in outgoing.get(v, ()) if e in unused]
            if not candidates:
                log.warning("boundary walk from %s stalled at vertex %d; dropping ring",
                            start_edge, v)
                ring = []
                break
            d_in = points[v] - points[u]
            best = None
            for cand in candidates:
                d_out = points[cand[1]] - points[cand[0]]
                angle = math.atan2(d_in[0] * d_out[1] - d_in[1] * d_out[0],
                                   d_in[0] * d_out[0] + d_in[1] * d_out[1])
                length = float(np.hypot(*d_out))
                score = (angle, -length)
                if best is None or score > best[0]:
                    best = (score, cand)
            edge = best[1]
            unused.discard(edge)
            ring.append(edge[0])
        if ring:
            rings.append(ring)
    return rings


def _merge_collinear(verts: np.ndarray) -> np.ndarray:
    """Drop vertices whose neighbors are collinear with them; repeats to fixpoint."""
    scale = max(1.0, float(np.abs(verts).max()))
    tol = 1e-9 * scale * scale
    changed = True
    while changed and len(verts) >= 3:
        changed = False
        keep = np.ones(len(verts), dtype=bool)
        n = len(verts)
        for i in range(n):
            p = verts[(i - 1) % n]
            q = verts[i]
            r = verts[(i + 1) % n]
            if abs(_orient(p, q, r)) <= tol:
                keep[i] = False
                changed = True
                break  # re-evaluate neighbors after each removal
        verts = verts[keep]
    return verts


def alpha_shape(points: np.ndarray, alpha: float) -> list[Polygon]:
    """Concave outline(s) of a point set: Delaunay triangles with circumradius
    at most 1/alpha, chained into boundary rings.

    Clockwise rings (interior holes) are dropped and logged. Raises
    DegenerateGeometryError when the points cannot be triangulated.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    tri = delaunay(points)
    limit = (1.0 / alpha) * (1.0 + ALPHA_TIE_RTOL)
    keep = tri.circumradii <= limit
    if not keep.any():
        log.info("alpha_shape: no triangle has circumradius <= %g, empty result", 1.0 / alpha)
        return []
    edges = _boundary_edges(tri.triangles, keep)
    polygons: list[Polygon] = []
    for ring in _chain_rings(tri.points, edges):
        verts = _merge_collinear(tri.points[ring])
        if len(verts) < 3:
            continue
        area = 0.5 * float(np.sum(verts[:, 0] * np.roll(verts[:, 1], -1)
                                  - np.roll(verts[:, 0], -1) * verts[:, 1]))
        if area <= 0:
            log.info("alpha_shape: dropping interior hole ring with %d vertices", len(verts))
            continue
        polygons.append(Polygon(vertices=verts))
    return polygons


def convex_hull(points: np.ndarray) -> Polygon:
    """Convex hull as a CCW polygon; collinear boundary points are excluded."""
    unique = dedupe_points(points)
    if len(unique) < 3:
        raise DegenerateGeometryError(f"need at least 3 unique points, got {len(unique)}")
    pts = unique[np.lexsort((unique[:, 1], unique[:, 0]))]

    def build(side_pts):
        chain: list[np.ndarray] = []
        for p in side_pts:
            while len(chain) >= 2 and _orient(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = build(pts)
    upper = build(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometryError("points are collinear")
    return Polygon(vertices=np.asarray(hull))
