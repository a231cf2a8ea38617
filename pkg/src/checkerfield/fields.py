"""Axis-aligned box fields and their signed corner-mass transform.

A checkered field is a finite linear combination of characteristic
functions of half-open boxes.  Its corner transform places the box
coefficient at each of the 2^n box vertices with an alternating sign
(+1 at an upper coordinate, -1 at a lower one).  The transform is
injective and is inverted here by suffix summation over the grid of
mass coordinates, which is the bulk form of corner peeling.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import NotInImage, PointOutsideDomain
from .validation import as_points, as_vector

# Vertex merge tolerance (relative to domain diameter) and the absolute
# magnitude below which merged masses are discarded.
POINT_MERGE_REL = 1e-12
MASS_DROP_ABS = 1e-10


@dataclass(frozen=True)
class Box:
    """Half-open axis-aligned box [lo_1, hi_1) x ... x [lo_n, hi_n)."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lo and hi must be nonempty and of equal length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"box must be nonempty: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def sides(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.sides))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def corners(self) -> np.ndarray:
        """All 2^n vertices, one row per vertex."""
        axes = [(lo, hi) for lo, hi in zip(self.lo, self.hi)]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def contains(self, x) -> bool:
        x = as_vector(x, self.dim)
        return bool(np.all(x >= self.lo) and np.all(x < self.hi))

    def contains_points(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        return np.all(X >= self.lo, axis=1) & np.all(X < self.hi, axis=1)


@dataclass(frozen=True)
class CheckeredField:
    """Signed sum of box indicators inside a domain box.

    Term boxes may overlap; coefficients of overlapping boxes add.
    """

    domain: Box
    terms: tuple[tuple[Box, float], ...] = ()

    def __post_init__(self):
        terms = tuple((box, float(c)) for box, c in self.terms)
        for box, _ in terms:
            if box.dim != self.domain.dim:
                raise ValueError("term box dimension does not match domain")
            if not (np.all(np.asarray(box.lo) >= self.domain.lo)
                    and np.all(np.asarray(box.hi) <= self.domain.hi)):
                raise ValueError(f"term box {box} is not contained in the domain")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def __add__(self, other: "CheckeredField") -> "CheckeredField":
        if other.domain != self.domain:
            raise ValueError("fields must share a domain")
        return CheckeredField(self.domain, self.terms + other.terms)

    def __mul__(self, a: float) -> "CheckeredField":
        return CheckeredField(self.domain, tuple((b, a * c) for b, c in self.terms))

    __rmul__ = __mul__

    def total_integral(self) -> float:
        return sum(c * box.volume for box, c in self.terms)


@dataclass(frozen=True)
class VectorCheckeredField:
    """Vector field whose components are checkered fields on one domain."""

    components: tuple[CheckeredField, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("need at least one component")
        domain = self.components[0].domain
        if any(c.domain != domain for c in self.components):
            raise ValueError("components must share the domain")

    @property
    def domain(self) -> Box:
        return self.components[0].domain

    @property
    def dim(self) -> int:
        return self.components[0].dim


@dataclass(frozen=True)
class PointMassField:
    """Finitely supported signed masses; scalar (m,) or vector (m, k) values."""

    dim: int
    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.dim)
        masses = np.asarray(self.masses, dtype=float)
        if masses.shape[0] != pts.shape[0]:
            raise ValueError("points and masses must have matching leading size")
        pts.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", masses)

    @property
    def is_vector(self) -> bool:
        return self.masses.ndim == 2

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def component(self, k: int) -> "PointMassField":
        if not self.is_vector:
            raise ValueError("scalar mass field has no components")
        return point_mass_field(self.dim, self.points, self.masses[:, k])

    def scaled(self, a: float) -> "PointMassField":
        return PointMassField(self.dim, self.points, a * self.masses)


def _cluster_1d(values: np.ndarray, tol: float) -> np.ndarray:
    """Snap close 1-D coordinates to their cluster mean."""
    if values.size == 0:
        return values
    order = np.argsort(values)
    sorted_vals = values[order]
    reps = np.empty_like(sorted_vals)
    start = 0
    for i in range(1, sorted_vals.size + 1):
        if i == sorted_vals.size or sorted_vals[i] - sorted_vals[i - 1] > tol:
            reps[start:i] = sorted_vals[start:i].mean()
            start = i
    out = np.empty_like(values)
    out[order] = reps
    return out


def point_mass_field(dim: int, points, masses,
                     merge_tol: float | None = None,
                     drop_tol: float = MASS_DROP_ABS) -> PointMassField:
    """Build a mass field, merging nearby points and dropping tiny masses."""
    pts = np.asarray(points, dtype=float).reshape(-1, dim)
    vals = np.asarray(masses, dtype=float)
    if pts.shape[0] == 0:
        return PointMassField(dim, pts, vals)
    if merge_tol is None:
        span = pts.max(axis=0) - pts.min(axis=0) if pts.shape[0] > 1 else np.ones(dim)
        merge_tol = POINT_MERGE_REL * max(float(np.linalg.norm(span)), 1.0)
    snapped = np.column_stack([_cluster_1d(pts[:, l], merge_tol) for l in range(dim)])
    uniq, inverse = np.unique(snapped, axis=0, return_inverse=True)
    if vals.ndim == 1:
        acc = np.zeros(uniq.shape[0])
        np.add.at(acc, inverse, vals)
        keep = np.abs(acc) > drop_tol
    else:
        acc = np.zeros((uniq.shape[0], vals.shape[1]))
        np.add.at(acc, inverse, vals)
        keep = np.linalg.norm(acc, axis=1) > drop_tol
    return PointMassField(dim, uniq[keep], acc[keep])


@dataclass(frozen=True)
class NodeReport:
    """Node taxonomy of a checkered field."""

    all_nodes: np.ndarray
    interesting: np.ndarray
    marked: np.ndarray


def eval_field(field: CheckeredField, x) -> float:
    """Value at a single point; raises PointOutsideDomain off the domain."""
    x = as_vector(x, field.dim)
    if not field.domain.contains(x):
        raise PointOutsideDomain(f"point {x.tolist()} is outside {field.domain}")
    total = 0.0
    for box, c in field.terms:
        if box.contains(x):
            total += c
    return total


def eval_field_many(field: CheckeredField, X) -> np.ndarray:
    """Vectorized field values at points inside the domain."""
    X = as_points(X, field.dim)
    inside = field.domain.contains_points(X)
    if not np.all(inside):
        bad = X[~inside][0]
        raise PointOutsideDomain(f"point {bad.tolist()} is outside {field.domain}")
    out = np.zeros(X.shape[0])
    for box, c in field.terms:
        out[box.contains_points(X)] += c
    return out


def eval_vector_field_many(field: VectorCheckeredField, X) -> np.ndarray:
    return np.column_stack([eval_field_many(c, X) for c in field.components])


def _corner_signs(dim: int) -> np.ndarray:
    """Signs of the 2^n corners in the order produced by Box.corners()."""
    patterns = np.array(list(itertools.product((-1.0, 1.0), repeat=dim)))
    return patterns.prod(axis=1)


def discretize(field: CheckeredField) -> PointMassField:
    """Signed corner masses of the field; coinciding vertices merge."""
    dim = field.dim
    pts = []
    vals = []
    signs = _corner_signs(dim)
    for box, c in field.terms:
        pts.append(box.corners())
        vals.append(signs * c)
    if not pts:
        return PointMassField(dim, np.empty((0, dim)), np.empty(0))
    merge_tol = POINT_MERGE_REL * max(field.domain.diameter, 1.0)
    return point_mass_field(dim, np.vstack(pts), np.concatenate(vals),
                            merge_tol=merge_tol)


def discretize_vector(field: VectorCheckeredField) -> PointMassField:
    """Component-wise corner masses stacked into one vector mass field."""
    k = len(field.components)
    pts = [np.empty((0, field.dim))]
    vals = [np.empty((0, k))]
    for i, comp in enumerate(field.components):
        pm = discretize(comp)
        v = np.zeros((pm.size, k))
        v[:, i] = pm.masses
        pts.append(pm.points)
        vals.append(v)
    merge_tol = POINT_MERGE_REL * max(field.domain.diameter, 1.0)
    return point_mass_field(field.dim, np.vstack(pts), np.vstack(vals),
                            merge_tol=merge_tol)


def classify_nodes(field: CheckeredField) -> NodeReport:
    """Grid nodes, nonzero-mass (interesting) nodes and the marked grid."""
    dim = field.dim
    merge_tol = POINT_MERGE_REL * max(field.domain.diameter, 1.0)
    if field.terms:
        corners = np.vstack([box.corners() for box, _ in field.terms])
        axis_vals = [np.unique(_cluster_1d(corners[:, l], merge_tol))
                     for l in range(dim)]
        all_nodes = np.array(list(itertools.product(*axis_vals)))
    else:
        all_nodes = np.empty((0, dim))
    pm = discretize(field)
    interesting = pm.points
    if interesting.shape[0]:
        marked_axes = [np.unique(interesting[:, l]) for l in range(dim)]
        marked = np.array(list(itertools.product(*marked_axes)))
    else:
        marked = np.empty((0, dim))
    return NodeReport(all_nodes=all_nodes, interesting=interesting, marked=marked)


def reconstruct_field(pm: PointMassField, domain: Box,
                      drop_tol: float = MASS_DROP_ABS,
                      check_tol: float | None = None) -> CheckeredField:
    """Invert the corner-mass transform on the marked grid.

    Cell values are suffix sums of the masses over the grid of mass
    coordinates (each corner cell's coefficient is read off and its
    contribution removed, executed in bulk).  Raises NotInImage when the
    resulting field does not reproduce the input masses within check_tol.
    """
    if pm.is_vector:
        raise ValueError("reconstruct_field expects scalar masses")
    if pm.size == 0:
        return CheckeredField(domain, ())
    dim = pm.dim
    snap = 1e-9 * max(domain.diameter, 1.0)
    pts = pm.points.copy()
    for l in range(dim):
        col = pts[:, l]
        col[np.abs(col - domain.lo[l]) <= snap] = domain.lo[l]
        col[np.abs(col - domain.hi[l]) <= snap] = domain.hi[l]
    axes = [np.unique(pts[:, l]) for l in range(dim)]
    shape = tuple(a.size for a in axes)
    grid = np.zeros(shape)
    idx = tuple(np.searchsorted(axes[l], pts[:, l]) for l in range(dim))
    grid[idx] = pm.masses

    # V[i...] = sum of masses at strictly larger grid indices on every axis
    values = grid
    for ax in range(dim):
        flipped = np.flip(values, axis=ax)
        csum = np.cumsum(flipped, axis=ax)
        incl = np.flip(csum, axis=ax)
        excl = np.zeros_like(incl)
        sl_dst = [slice(None)] * dim
        sl_src = [slice(None)] * dim
        sl_dst[ax] = slice(0, shape[ax] - 1)
        sl_src[ax] = slice(1, shape[ax])
        excl[tuple(sl_dst)] = incl[tuple(sl_src)]
        values = excl

    terms = []
    for cell in itertools.product(*(range(s - 1) for s in shape)):
        v = values[cell]
        if abs(v) > drop_tol:
            lo = tuple(axes[l][cell[l]] for l in range(dim))
            hi = tuple(axes[l][cell[l] + 1] for l in range(dim))
            terms.append((Box(lo, hi), float(v)))

    result = CheckeredField(domain, tuple(terms))
    check = discretize(result)
    scale = max(1.0, float(np.max(np.abs(pm.masses))))
    if check_tol is None:
        check_tol = max(drop_tol, 1e-9 * scale)
    if not point_mass_allclose(check, pm, atol=check_tol):
        raise NotInImage("masses are not the corner transform of any box field")
    return result


def point_mass_allclose(a: PointMassField, b: PointMassField,
                        atol: float = 1e-9) -> bool:
    """Compare two merged mass fields as signed measures."""
    if a.dim != b.dim or a.is_vector != b.is_vector:
        return False
    width = a.masses.shape[1] if a.is_vector else 1
    pts = np.vstack([a.points, b.points])
    vals = np.concatenate([a.masses.reshape(a.size, width),
                           -b.masses.reshape(b.size, width)])
    diff = point_mass_field(a.dim, pts, vals if a.is_vector else vals[:, 0],
                            drop_tol=atol)
    return diff.size == 0


def random_checkered_field(domain: Box, n_boxes: int, rng,
                           coord_step: float = 0.0,
                           value_range: tuple[float, float] = (-5.0, 5.0),
                           min_side: float = 0.05) -> CheckeredField:
    """Random field with n_boxes terms, optionally on a coordinate grid."""
    lo = np.asarray(domain.lo)
    hi = np.asarray(domain.hi)
    terms = []
    for _ in range(n_boxes):
        while True:
            a = lo + (hi - lo) * rng.random(domain.dim)
            b = lo + (hi - lo) * rng.random(domain.dim)
            blo, bhi = np.minimum(a, b), np.maximum(a, b)
            if coord_step > 0:
                blo = lo + np.round((blo - lo) / coord_step) * coord_step
                bhi = lo + np.round((bhi - lo) / coord_step) * coord_step
                bhi = np.minimum(bhi, hi)
            if np.all(bhi - blo >= min_side):
                break
        value = rng.uniform(*value_range)
        if abs(value) < 0.25:
            value = 0.25 if value >= 0 else -0.25
        terms.append((Box(tuple(blo), tuple(bhi)), float(value)))
    return CheckeredField(domain, tuple(terms))


# ---------------------------------------------------------------------------
# JSON serialization


def box_to_obj(box: Box) -> dict:
    return {"lo": list(box.lo), "hi": list(box.hi)}


def box_from_obj(obj: dict) -> Box:
    return Box(tuple(obj["lo"]), tuple(obj["hi"]))


def field_to_obj(field: CheckeredField) -> dict:
    return {
        "dim": field.dim,
        "domain": box_to_obj(field.domain),
        "terms": [{"lo": list(b.lo), "hi": list(b.hi), "value": c}
                  for b, c in field.terms],
    }


def field_from_obj(obj: dict) -> CheckeredField:
    domain = box_from_obj(obj["domain"])
    terms = tuple((Box(tuple(t["lo"]), tuple(t["hi"])), float(t["value"]))
                  for t in obj["terms"])
    field = CheckeredField(domain, terms)
    if field.dim != obj["dim"]:
        raise ValueError("declared dimension does not match the domain box")
    return field


def field_to_json(field: CheckeredField) -> str:
    return json.dumps(field_to_obj(field), sort_keys=True)


def field_from_json(text: str) -> CheckeredField:
    return field_from_obj(json.loads(text))


def point_masses_to_obj(pm: PointMassField) -> list:
    out = []
    for p, m in zip(pm.points, pm.masses):
        mass = m.tolist() if pm.is_vector else float(m)
        out.append({"point": p.tolist(), "mass": mass})
    return out


def point_masses_from_obj(items: list, dim: int) -> PointMassField:
    pts = [it["point"] for it in items]
    masses = [it["mass"] for it in items]
    if not pts:
        return PointMassField(dim, np.empty((0, dim)), np.empty(0))
    return point_mass_field(dim, np.asarray(pts), np.asarray(masses))
