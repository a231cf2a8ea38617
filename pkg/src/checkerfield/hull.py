"""Support-function sampling geometry: directions, clipping, vertex cleanup.

The recovered support function only constrains the hull along sampled
directions, so the raw half-space intersection carries one shallow
spurious vertex per true edge (turning angle about the direction
spacing).  Cleanup merges coincident intersection vertices and keeps the
ones supported by at least dim + 1 active constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHull
from .fields import Box


@dataclass(frozen=True)
class Polytope:
    """Convex hull as vertices plus the supporting half-spaces that cut it.

    witnesses, when present, are additional boundary points of the
    sampled intersection (including discretization artifacts); margin
    tests against them are conservative where the vertex list alone
    would miss a shallow neighbor.
    """

    dim: int
    vertices: np.ndarray              # (m, dim)
    halfspaces: tuple[tuple[np.ndarray, float], ...]
    witnesses: np.ndarray | None = None

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def circle_directions(count: int) -> np.ndarray:
    """Uniformly spaced unit directions on the circle."""
    phi = 2.0 * np.pi * np.arange(count) / count
    return np.column_stack([np.cos(phi), np.sin(phi)])


def fibonacci_directions(count: int) -> np.ndarray:
    """Golden-spiral unit directions on the sphere, antipodally augmented."""
    k = np.arange(count)
    z = 1.0 - (2.0 * k + 1.0) / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z ** 2))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    phi = golden * k
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return np.vstack([pts, -pts])


def axis_directions(dim: int) -> np.ndarray:
    eye = np.eye(dim)
    return np.vstack([eye, -eye])


def direction_set(dim: int, count: int) -> np.ndarray:
    """Sampled directions including the coordinate axes, antipodal-closed."""
    if dim == 2:
        base = circle_directions(count)
    elif dim == 3:
        base = fibonacci_directions(max(count // 2, 8))
    else:
        raise ValueError("direction sampling supports dim 2 and 3")
    dirs = np.vstack([base, axis_directions(dim)])
    # drop near-duplicates so constraint counting stays meaningful
    keep = []
    for d in dirs:
        if not keep or np.max(np.abs(np.asarray(keep) @ d)) < 1.0 - 1e-12:
            keep.append(d)
    return np.asarray(keep)


def box_halfspaces(box: Box) -> list[tuple[np.ndarray, float]]:
    out = []
    for l in range(box.dim):
        e = np.zeros(box.dim)
        e[l] = 1.0
        out.append((e.copy(), float(box.hi[l])))
        out.append((-e, -float(box.lo[l])))
    return out


def clip_polygon(vertices: np.ndarray, normal: np.ndarray,
                 offset: float, eps: float = 0.0) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon by (x, normal) <= offset."""
    if vertices.shape[0] == 0:
        return vertices
    d = vertices @ normal - (offset + eps)
    if np.all(d <= 0):
        return vertices
    if np.all(d > 0):
        return np.empty((0, 2))
    out = []
    m = vertices.shape[0]
    for i in range(m):
        j = (i + 1) % m
        vi, vj = vertices[i], vertices[j]
        di, dj = d[i], d[j]
        if di <= 0:
            out.append(vi)
        if (di <= 0) != (dj <= 0):
            t = di / (di - dj)
            out.append(vi + t * (vj - vi))
    return np.asarray(out)


def merge_close_vertices(points: np.ndarray, tol: float) -> np.ndarray:
    """Greedy clustering; each cluster is replaced by its centroid."""
    if points.shape[0] == 0:
        return points
    remaining = list(range(points.shape[0]))
    centers = []
    while remaining:
        seed = remaining.pop(0)
        cluster = [seed]
        center = points[seed].copy()
        changed = True
        while changed:
            changed = False
            for idx in list(remaining):
                if np.linalg.norm(points[idx] - center) <= tol:
                    cluster.append(idx)
                    remaining.remove(idx)
                    center = points[cluster].mean(axis=0)
                    changed = True
        centers.append(center)
    return np.asarray(centers)


def halfspace_polygon_vertices(normals: np.ndarray, offsets: np.ndarray,
                               domain_lo: np.ndarray, domain_hi: np.ndarray,
                               eps: float = 0.0) -> np.ndarray:
    """Vertices of the intersection polygon, clipped inside a bounding box."""
    poly = np.array([[domain_lo[0], domain_lo[1]],
                     [domain_hi[0], domain_lo[1]],
                     [domain_hi[0], domain_hi[1]],
                     [domain_lo[0], domain_hi[1]]])
    for n, h in zip(normals, offsets):
        poly = clip_polygon(poly, n, h, eps)
        if poly.shape[0] == 0:
            return poly
    return poly


def halfspace_polytope_vertices_3d(normals: np.ndarray, offsets: np.ndarray,
                                   domain_lo: np.ndarray,
                                   domain_hi: np.ndarray) -> np.ndarray:
    """Vertices of a full-dimensional 3-D half-space intersection."""
    from scipy.optimize import linprog
    from scipy.spatial import HalfspaceIntersection

    box_normals = []
    box_offsets = []
    for l in range(3):
        e = np.zeros(3)
        e[l] = 1.0
        box_normals.extend([e.copy(), -e])
        box_offsets.extend([domain_hi[l], -domain_lo[l]])
    A = np.vstack([normals, box_normals])
    b = np.concatenate([offsets, box_offsets])

    # Chebyshev center: maximize r subject to A x + ||row|| r <= b
    norms = np.linalg.norm(A, axis=1)
    res = linprog(c=[0.0, 0.0, 0.0, -1.0],
                  A_ub=np.column_stack([A, norms]), b_ub=b,
                  bounds=[(None, None)] * 3 + [(0, None)],
                  method="highs")
    if not res.success or res.x[3] <= 1e-12:
        raise DegenerateHull("half-space intersection has empty interior")
    interior = res.x[:3]
    hs = HalfspaceIntersection(np.column_stack([A, -b]), interior)
    return hs.intersections


def extreme_points(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Subset of points that are vertices of their convex hull.

    Handles affinely degenerate inputs (point, segment, planar set in 3-D)
    by recursing in the affine span.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] <= 1:
        return pts
    center = pts.mean(axis=0)
    centered = pts - center
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(s[0], 1.0)
    rank = int(np.sum(s > tol * scale))
    if rank == 0:
        return pts[:1]
    if rank == 1:
        t = centered @ vt[0]
        return np.asarray([pts[np.argmin(t)], pts[np.argmax(t)]])
    if rank < pts.shape[1]:
        flat = centered @ vt[:rank].T
        sub = extreme_points(flat, tol)
        return center + sub @ vt[:rank]
    from scipy.spatial import ConvexHull

    hull = ConvexHull(pts)
    return pts[hull.vertices]
