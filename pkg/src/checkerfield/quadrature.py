"""Gauss-Legendre tensor rules on boxes, annuli and balls."""

from __future__ import annotations

import numpy as np

from .fields import Box


def gauss_panels(a: float, b: float, panels: int, order: int):
    """Composite Gauss rule on [a, b] split into equal panels."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return x, w


def box_rule(box: Box, alpha: float = 0.0, order: int = 8):
    """Tensor rule over a box, with panels split so alpha * diameter <= 2.

    Returns points (m, n) and weights (m,).
    """
    dim = box.dim
    sides = box.sides
    if alpha:
        # per-axis panel side <= 2 / (alpha * sqrt(n)) keeps the panel
        # diagonal within 2 / alpha
        target = 2.0 / (abs(alpha) * np.sqrt(dim))
        counts = np.maximum(1, np.ceil(sides / target).astype(int))
    else:
        counts = np.ones(dim, dtype=int)
    axes = [gauss_panels(lo, hi, int(c), order)
            for lo, hi, c in zip(box.lo, box.hi, counts)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    points = np.column_stack([g.ravel() for g in grids])
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    weights = np.ones_like(wgrids[0])
    for w in wgrids:
        weights = weights * w
    return points, weights.ravel()


def annulus_rule(r0: float, r1: float, dim: int,
                 n_radial: int = 64, n_angular: int = 128):
    """Polar/spherical tensor rule on the layer r0 <= |x| < r1.

    2D: radial Gauss x uniform angles.  3D: radial Gauss x Gauss in
    cos(theta) x uniform azimuth (n_angular used for azimuth, half of it
    for the polar factor).
    """
    r, wr = gauss_panels(r0, r1, 1, n_radial)
    if dim == 2:
        phi = 2.0 * np.pi * np.arange(n_angular) / n_angular
        wphi = np.full(n_angular, 2.0 * np.pi / n_angular)
        R, PHI = np.meshgrid(r, phi, indexing="ij")
        points = np.column_stack([(R * np.cos(PHI)).ravel(),
                                  (R * np.sin(PHI)).ravel()])
        weights = ((wr * r)[:, None] * wphi[None, :]).ravel()
        return points, weights
    if dim == 3:
        n_pol = max(n_angular // 2, 4)
        ct, wct = np.polynomial.legendre.leggauss(n_pol)
        phi = 2.0 * np.pi * np.arange(n_angular) / n_angular
        wphi = np.full(n_angular, 2.0 * np.pi / n_angular)
        st = np.sqrt(1.0 - ct ** 2)
        R, CT, PHI = np.meshgrid(r, ct, phi, indexing="ij")
        ST = np.sqrt(1.0 - CT ** 2)
        points = np.column_stack([(R * ST * np.cos(PHI)).ravel(),
                                  (R * ST * np.sin(PHI)).ravel(),
                                  (R * CT).ravel()])
        weights = ((wr * r ** 2)[:, None, None]
                   * wct[None, :, None] * wphi[None, None, :]).ravel()
        return points, weights
    raise ValueError("annulus_rule supports dim 2 and 3")


def ball_rule(r: float, dim: int, n_radial: int = 64, n_angular: int = 128):
    return annulus_rule(0.0, r, dim, n_radial, n_angular)


def unit_ball_volume(n: int) -> float:
    from math import gamma, pi
    return pi ** (n / 2) / gamma(n / 2 + 1)
