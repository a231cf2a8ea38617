"""Boundary Cauchy data for 2-D box charges via the free-space log kernel.

The potential of a charged rectangle is integrated in closed form.  With
X = x1 - y1, Y = x2 - y2 the double antiderivative of ln|x - y| is

    H(X, Y) = (X Y ln(X^2 + Y^2) - 3 X Y
               + X^2 atan(Y / X) + Y^2 atan(X / Y)) / 2,

so the box integral is the alternating sum of H over the four corner
offsets.  The normalization ln|x - y| / (2 pi) vanishes at unit distance;
any additive harmonic difference to another Green convention cancels in
the boundary moment formula.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import BoxTouchesBoundary, MalformedTrace, OnSingularEdge
from .fields import Box, CheckeredField
from .quadrature import gauss_panels
from .validation import as_points

EDGE_SINGULAR_TOL = 1e-12
BOUNDARY_CLEARANCE = 1e-6

TRACE_COLUMNS = ["edge_id", "s", "x", "y", "nu_x", "nu_y", "weight", "phi1", "phi2"]


def _safe_atan_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """atan(num / den) with the 0/0 corner resolved to 0."""
    out = np.zeros(np.broadcast(num, den).shape)
    nz = den != 0
    out[nz] = np.arctan(num[nz] / den[nz])
    out[~nz] = 0.5 * np.pi * np.sign(num[~nz])
    return out


def _log_r2(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    r2 = X ** 2 + Y ** 2
    out = np.full(r2.shape, -np.inf)
    nz = r2 > 0
    out[nz] = np.log(r2[nz])
    return out


def _masked_product(factor: np.ndarray, other: np.ndarray) -> np.ndarray:
    """factor * other with factor == 0 forcing 0 (even against inf)."""
    out = np.zeros(np.broadcast(factor, other).shape)
    nz = factor != 0
    out[nz] = factor[nz] * other[nz]
    return out


def _primitive(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Double antiderivative of ln sqrt(X^2 + Y^2)."""
    logr2 = _log_r2(X, Y)
    xy = X * Y
    term_log = _masked_product(xy, logr2)
    term_x = _masked_product(X ** 2, _safe_atan_ratio(Y, X))
    term_y = _masked_product(Y ** 2, _safe_atan_ratio(X, Y))
    return 0.5 * (term_log - 3.0 * xy + term_x + term_y)


def _primitive_dx(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """d/dX of the primitive: (Y ln(X^2+Y^2) - 2Y + 2X atan(Y/X)) / 2."""
    logr2 = _log_r2(X, Y)
    term_log = _masked_product(Y, logr2)
    term_at = _masked_product(X, _safe_atan_ratio(Y, X))
    return 0.5 * (term_log - 2.0 * Y + 2.0 * term_at)


def _primitive_dy(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return _primitive_dx(Y, X)


def _corner_sum(func, box: Box, Y: np.ndarray) -> np.ndarray:
    """Alternating corner sum of a primitive over offsets box - Y."""
    x0, y0 = box.lo
    x1, y1 = box.hi
    dx0 = x0 - Y[:, 0]
    dx1 = x1 - Y[:, 0]
    dy0 = y0 - Y[:, 1]
    dy1 = y1 - Y[:, 1]
    return (func(dx1, dy1) - func(dx0, dy1) - func(dx1, dy0) + func(dx0, dy0))


def potential(field: CheckeredField, y) -> float:
    """Newtonian log potential of the field at a point (2-D)."""
    return float(potential_many(field, np.atleast_2d(np.asarray(y, dtype=float)))[0])


def potential_many(field: CheckeredField, Y) -> np.ndarray:
    if field.dim != 2:
        raise ValueError("the forward solver is 2-D only")
    Y = as_points(Y, 2)
    out = np.zeros(Y.shape[0])
    for box, c in field.terms:
        out += c * _corner_sum(_primitive, box, Y)
    return out / (2.0 * np.pi)


def _on_box_edge(box: Box, Y: np.ndarray, tol: float) -> np.ndarray:
    x0, y0 = box.lo
    x1, y1 = box.hi
    on_v = ((np.abs(Y[:, 0] - x0) < tol) | (np.abs(Y[:, 0] - x1) < tol)) \
        & (Y[:, 1] > y0 - tol) & (Y[:, 1] < y1 + tol)
    on_h = ((np.abs(Y[:, 1] - y0) < tol) | (np.abs(Y[:, 1] - y1) < tol)) \
        & (Y[:, 0] > x0 - tol) & (Y[:, 0] < x1 + tol)
    return on_v | on_h


def potential_gradient(field: CheckeredField, y) -> np.ndarray:
    """Gradient of the potential; undefined on term-box edges."""
    return potential_gradient_many(field, np.atleast_2d(np.asarray(y, dtype=float)))[0]


def potential_gradient_many(field: CheckeredField, Y) -> np.ndarray:
    if field.dim != 2:
        raise ValueError("the forward solver is 2-D only")
    Y = as_points(Y, 2)
    out = np.zeros((Y.shape[0], 2))
    for box, c in field.terms:
        if np.any(_on_box_edge(box, Y, EDGE_SINGULAR_TOL)):
            raise OnSingularEdge("gradient evaluated on a term-box edge")
        # d/dy = -d/dX of the corner sum
        out[:, 0] -= c * _corner_sum(_primitive_dx, box, Y)
        out[:, 1] -= c * _corner_sum(_primitive_dy, box, Y)
    return out / (2.0 * np.pi)


@dataclass(frozen=True)
class BoundaryTrace:
    """Sampled Dirichlet/Neumann data on a rectangle boundary.

    Arrays are ordered counterclockwise from the bottom edge; weights are
    composite Gauss weights summing to the perimeter.
    """

    gamma: Box
    edge_id: np.ndarray
    s: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray

    def __post_init__(self):
        m = self.points.shape[0]
        for name in ("edge_id", "s", "weights", "phi1", "phi2"):
            arr = getattr(self, name)
            if arr.shape != (m,):
                raise MalformedTrace(f"{name} must have shape ({m},)")
        if self.normals.shape != (m, 2):
            raise MalformedTrace("normals must have shape (m, 2)")
        if np.any(self.weights <= 0):
            raise MalformedTrace("weights must be positive")
        for arr in (self.s, self.points, self.normals, self.weights,
                    self.phi1, self.phi2):
            if not np.all(np.isfinite(arr)):
                raise MalformedTrace("trace contains non-finite values")
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def total_flux(self) -> float:
        return float(np.sum(self.weights * self.phi2))

    def perimeter(self) -> float:
        return float(np.sum(self.weights))


def _edge_samples(gamma: Box):
    """Counterclockwise edge parametrizations: (start, direction, length, normal)."""
    (x0, y0), (x1, y1) = gamma.lo, gamma.hi
    return [
        (np.array([x0, y0]), np.array([1.0, 0.0]), x1 - x0, np.array([0.0, -1.0])),
        (np.array([x1, y0]), np.array([0.0, 1.0]), y1 - y0, np.array([1.0, 0.0])),
        (np.array([x1, y1]), np.array([-1.0, 0.0]), x1 - x0, np.array([0.0, 1.0])),
        (np.array([x0, y1]), np.array([0.0, -1.0]), y1 - y0, np.array([-1.0, 0.0])),
    ]


def boundary_trace(field: CheckeredField, gamma: Box,
                   points_per_edge: int = 16,
                   panels_per_edge: int = 4) -> BoundaryTrace:
    """Exact Cauchy data of the field's potential on the rectangle gamma.

    points_per_edge is the Gauss order per panel.  Every term box must
    keep a positive clearance to gamma so the gradient stays regular.
    """
    if field.dim != 2 or gamma.dim != 2:
        raise ValueError("boundary traces are 2-D only")
    for box, _ in field.terms:
        inside = (np.all(np.asarray(box.lo) >= np.asarray(gamma.lo) + BOUNDARY_CLEARANCE)
                  and np.all(np.asarray(box.hi) <= np.asarray(gamma.hi) - BOUNDARY_CLEARANCE))
        if not inside:
            raise BoxTouchesBoundary(
                f"term box {box} is within {BOUNDARY_CLEARANCE} of the trace boundary")
    edge_ids, svals, pts, nus, ws = [], [], [], [], []
    for eid, (start, direction, length, nu) in enumerate(_edge_samples(gamma)):
        t, w = gauss_panels(0.0, length, panels_per_edge, points_per_edge)
        edge_ids.append(np.full(t.size, eid))
        svals.append(t)
        pts.append(start[None, :] + t[:, None] * direction[None, :])
        nus.append(np.tile(nu, (t.size, 1)))
        ws.append(w)
    points = np.vstack(pts)
    phi1 = potential_many(field, points)
    grad = potential_gradient_many(field, points)
    normals = np.vstack(nus)
    phi2 = np.sum(grad * normals, axis=1)
    return BoundaryTrace(
        gamma=gamma,
        edge_id=np.concatenate(edge_ids),
        s=np.concatenate(svals),
        points=points,
        normals=normals,
        weights=np.concatenate(ws),
        phi1=phi1,
        phi2=phi2,
    )


def add_noise(trace: BoundaryTrace, rel_level: float, seed: int) -> BoundaryTrace:
    """Multiply phi1, phi2 by (1 + rel_level * xi), xi standard normal."""
    if rel_level < 0:
        raise ValueError("rel_level must be nonnegative")
    if rel_level == 0:
        return trace
    rng = np.random.default_rng(seed)
    xi1 = rng.standard_normal(trace.size)
    xi2 = rng.standard_normal(trace.size)
    return BoundaryTrace(
        gamma=trace.gamma,
        edge_id=trace.edge_id,
        s=trace.s,
        points=trace.points,
        normals=trace.normals,
        weights=trace.weights,
        phi1=trace.phi1 * (1.0 + rel_level * xi1),
        phi2=trace.phi2 * (1.0 + rel_level * xi2),
    )


def trace_to_csv(trace: BoundaryTrace, path=None) -> str | None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(TRACE_COLUMNS + ["gamma_lo_x", "gamma_lo_y",
                                     "gamma_hi_x", "gamma_hi_y"])
    gamma = [repr(v) for v in (*trace.gamma.lo, *trace.gamma.hi)]
    for k in range(trace.size):
        row = [int(trace.edge_id[k]), repr(float(trace.s[k])),
               repr(float(trace.points[k, 0])), repr(float(trace.points[k, 1])),
               repr(float(trace.normals[k, 0])), repr(float(trace.normals[k, 1])),
               repr(float(trace.weights[k])),
               repr(float(trace.phi1[k])), repr(float(trace.phi2[k]))]
        writer.writerow(row + (gamma if k == 0 else ["", "", "", ""]))
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return None
    return text


def trace_from_csv(path_or_text) -> BoundaryTrace:
    if "\n" in str(path_or_text):
        fh = io.StringIO(path_or_text)
    else:
        fh = open(path_or_text, newline="")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:9] != TRACE_COLUMNS:
            raise MalformedTrace(f"expected header {TRACE_COLUMNS}, got {header}")
        rows = [r for r in reader if r]
    if not rows:
        raise MalformedTrace("trace file has no samples")
    try:
        gamma = Box((float(rows[0][9]), float(rows[0][10])),
                    (float(rows[0][11]), float(rows[0][12])))
        data = np.array([[float(v) for v in r[:9]] for r in rows])
    except (IndexError, ValueError) as exc:
        raise MalformedTrace(f"bad trace row: {exc}") from exc
    return BoundaryTrace(
        gamma=gamma,
        edge_id=data[:, 0],
        s=data[:, 1],
        points=data[:, 2:4].copy(),
        normals=data[:, 4:6].copy(),
        weights=data[:, 6],
        phi1=data[:, 7],
        phi2=data[:, 8],
    )
