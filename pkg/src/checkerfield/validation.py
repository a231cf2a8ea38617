"""Input validation helpers shared by the library and the estimators."""

from __future__ import annotations

import numpy as np

UNIT_TOL = 1e-12


def as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a 1-D float array, optionally checking its length."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{name} must have length {dim}, got {v.shape[0]}")
    return v


def as_points(X, dim: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to an (m, dim) float array of points."""
    pts = np.asarray(X, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of points, got shape {pts.shape}")
    if dim is not None and pts.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} columns, got {pts.shape[1]}")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{name} contains non-finite values")
    return pts


def as_unit_vector(x, dim: int | None = None, name: str = "vector") -> np.ndarray:
    v = as_vector(x, dim, name)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > UNIT_TOL:
        raise ValueError(f"{name} must be a unit vector (|{name}| = {norm!r})")
    return v


def check_orthogonal(a: np.ndarray, b: np.ndarray, tol: float = UNIT_TOL) -> None:
    if abs(float(np.dot(a, b))) > tol:
        raise ValueError("vectors must be orthogonal")
