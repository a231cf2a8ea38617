"""Support-slope hull recovery, vertex values and peeling.

The moment of a box source against a probe grows like exp(alpha * h)
where h is the support value of the mass support in the probe's growth
direction.  Slopes of log-moments over an alpha grid therefore sample
the support function; intersecting the supporting half-spaces yields the
convex hull of the masses, separating directions expose one vertex at a
time, and the probe limit at a vertex reads off its mass.  Subtracting
recovered vertices and repeating exhausts the support.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    AllUnderflow,
    DegenerateHull,
    InconsistentF3,
    NoAdmissiblePsi,
    NoSeparation,
    PeelStalled,
    SingularSystem,
)
from .fields import (
    Box,
    CheckeredField,
    PointMassField,
    VectorCheckeredField,
    point_mass_field,
    reconstruct_field,
)
from .hull import (
    Polytope,
    extreme_points,
    fibonacci_directions,
    halfspace_polygon_vertices,
    halfspace_polytope_vertices_3d,
    merge_close_vertices,
)
from .probes import (
    ADMISSIBLE_TOL,
    CurlMomentSource,
    MomentSource,
    is_admissible,
    make_admissible_pair,
    subtract_masses,
)
from .validation import as_unit_vector

SEPARATION_TOL = 1e-6
GUARD_DROP = 40.0  # window points this far (in log) below the trend are dips


@dataclass(frozen=True)
class ReconstructionConfig:
    """Numerical discretization of the large-alpha limits.

    The alpha grid is geometric: alpha0 * ratio**k, k < count.  tol_hull
    is relative to the domain diameter.  directions defaults to 180 in
    2-D and 400 in 3-D.
    """

    alpha0: float = 0.5
    ratio: float = 1.3
    count: int = 25
    directions: int | None = None
    window: int = 8
    tol_value: float = 1e-6
    tol_hull: float = 1e-3
    max_peel_rounds: int = 8

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.ratio > 1):
            raise ValueError("need alpha0 > 0 and ratio > 1")
        if self.count < 2 or self.window < 2:
            raise ValueError("count and window must be at least 2")

    @property
    def alphas(self) -> np.ndarray:
        return self.alpha0 * self.ratio ** np.arange(self.count)

    def directions_for(self, dim: int) -> int:
        if self.directions is not None:
            return self.directions
        return 180 if dim == 2 else 400

    @classmethod
    def oracle(cls, **overrides) -> "ReconstructionConfig":
        """Defaults suited to analytic (log-domain) sources."""
        params = dict(alpha0=200.0, ratio=1.35, count=18, window=8,
                      tol_value=1e-6, tol_hull=1e-3, max_peel_rounds=8)
        params.update(overrides)
        return cls(**params)


def _thread_count() -> int:
    raw = os.environ.get("CHECKERFIELD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map(fn, items):
    workers = _thread_count()
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def antipodal_directions(dim: int, count: int) -> np.ndarray:
    """Direction samples with dirs[2k+1] == -dirs[2k], axes included."""
    if dim == 1:
        base = np.array([[1.0]])
    elif dim == 2:
        half = max(count // 2, 4)
        phi = np.pi * np.arange(half) / half
        base = np.column_stack([np.cos(phi), np.sin(phi)])
    elif dim == 3:
        base = fibonacci_directions(max(count // 2, 8))[:max(count // 2, 8)]
        axes = np.eye(3)
        base = np.vstack([base, axes])
    else:
        raise ValueError("supported dimensions are 2 and 3")
    if dim == 2:
        base = np.vstack([base, np.eye(2)])
    out = np.empty((2 * base.shape[0], dim))
    out[0::2] = base
    out[1::2] = -base
    # drop duplicated pairs (axes may repeat the sampled set)
    keep = []
    for k in range(0, out.shape[0], 2):
        d = out[k]
        if not any(abs(float(out[i] @ d)) > 1.0 - 1e-12 for i in keep):
            keep.append(k)
    idx = np.array([[k, k + 1] for k in keep]).ravel()
    return out[idx]


def _perturbed_thetas(theta: np.ndarray) -> list[np.ndarray]:
    """Deterministic small tilts used when no admissible psi exists."""
    out = []
    n = theta.shape[0]
    for scale in (3e-3, 1e-2, 3e-2):
        for axis in range(n):
            e = np.zeros(n)
            e[axis] = 1.0
            cand = theta + scale * e
            norm = np.linalg.norm(cand)
            if norm > 0:
                cand = cand / norm
                if abs(float(cand @ theta)) < 1.0 - 1e-14:
                    out.append(cand)
    return out


def _admissible_theta_psi(theta: np.ndarray, extra: str | None):
    """(theta, psi) admissible pair, tilting theta if it is stuck."""
    try:
        return theta, make_admissible_pair(theta, extra=extra)
    except NoAdmissiblePsi:
        for cand in _perturbed_thetas(theta):
            try:
                return cand, make_admissible_pair(cand, extra=extra)
            except NoAdmissiblePsi:
                continue
        raise


CREDIBILITY_MARGIN = np.log(30.0)


def _usable_logs(source: MomentSource, alphas, theta, psi) -> np.ndarray:
    """log node sums with values near the source's noise floor removed."""
    logs = source.log_weighted_sum(alphas, theta, psi)
    floor = source.log_noise_floor(alphas, theta, psi)
    if floor is not None:
        drowned = logs.real < floor + CREDIBILITY_MARGIN
        logs = np.where(drowned, complex(-np.inf), logs)
    return logs


def support_slope(source: MomentSource, theta, cfg: ReconstructionConfig,
                  psi: np.ndarray | None = None) -> float:
    """Least-squares slope of the log node sum over the last window points.

    Estimates max over the mass support of (y, theta).  The known
    prefactor C is divided out before fitting; window points that dipped
    far below the trend (cancellation) or sit near the source's noise
    floor are discarded.
    """
    theta = as_unit_vector(theta, name="theta")
    if psi is None:
        psi = make_admissible_pair(theta, extra=source.admissible_extra)
    alphas = cfg.alphas
    logs = _usable_logs(source, alphas, theta, psi).real
    return _slope_from_logs(alphas, logs, cfg.window)


def _slope_from_logs(alphas: np.ndarray, logs: np.ndarray,
                     window: int) -> float:
    usable = np.where(np.isfinite(logs))[0]
    if usable.size < 2:
        raise AllUnderflow("fewer than two usable grid moments")
    idx = usable[-window:]
    a = alphas[idx]
    v = logs[idx]
    slope, intercept = np.polyfit(a, v, 1)
    # cancellation dips sit far below the fitted trend; refit without them
    dips = v < slope * a + intercept - GUARD_DROP
    if np.any(dips):
        ok = ~dips
        if np.sum(ok) < 2:
            raise AllUnderflow("fewer than two usable window moments")
        slope = np.polyfit(a[ok], v[ok], 1)[0]
    return float(slope)


def _domain_support_min(domain: Box, theta: np.ndarray) -> float:
    return float(min(c @ theta for c in domain.corners()))


def _domain_support_max(domain: Box, theta: np.ndarray) -> float:
    return float(max(c @ theta for c in domain.corners()))


def _scan_slopes(source: MomentSource, dirs: np.ndarray,
                 cfg: ReconstructionConfig):
    """Support slopes per direction.

    Returns used thetas, offsets and the log amplitude of the dominant
    node seen from each direction (nan offsets mark dead directions).
    """
    alphas = cfg.alphas

    def one(theta):
        try:
            theta_used, psi = _admissible_theta_psi(theta, source.admissible_extra)
        except NoAdmissiblePsi:
            return theta, np.nan, -np.inf
        logs = _usable_logs(source, alphas, theta_used, psi).real
        try:
            slope = _slope_from_logs(alphas, logs, cfg.window)
        except AllUnderflow:
            return theta_used, np.nan, -np.inf
        usable = np.where(np.isfinite(logs))[0]
        k_top = usable[-1]
        amp_log = logs[k_top] - slope * alphas[k_top]
        return theta_used, slope, amp_log

    results = _map(one, list(dirs))
    thetas = np.asarray([r[0] for r in results])
    offsets = np.asarray([r[1] for r in results])
    amp_logs = np.asarray([r[2] for r in results])
    return thetas, offsets, amp_logs


def _live_mask(domain: Box, thetas: np.ndarray, offsets: np.ndarray,
               amp_logs: np.ndarray, tol_abs: float,
               tol_value: float) -> np.ndarray:
    """Directions still carrying recoverable mass.

    A direction is dead when its slope drops below any support value the
    domain box allows, or when the dominant amplitude it sees is already
    below the value tolerance (residue of earlier subtractions).
    """
    mins = np.asarray([_domain_support_min(domain, t) for t in thetas])
    alive = np.isfinite(offsets) & (offsets >= mins + tol_abs)
    # demand twice the acceptance tolerance so sub-threshold residues of
    # earlier subtractions cannot keep a direction alive forever
    return alive & (amp_logs >= np.log(2.0 * tol_value))


def _complement_basis(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of u (columns)."""
    from scipy.linalg import null_space

    return null_space(u.reshape(1, -1))


def _vertices_from_support(source: MomentSource, cfg: ReconstructionConfig,
                           basis: np.ndarray, origin: np.ndarray,
                           collect: dict | None = None,
                           scan=None) -> np.ndarray:
    """Hull vertices of the mass support inside an affine subspace.

    basis columns are orthonormal directions of the subspace through
    origin.  Flat widths trigger recursion into a thinner subspace.
    """
    dim = source.dim
    domain = source.domain
    diam = domain.diameter
    r = basis.shape[1]
    if r == 0:
        return origin.reshape(1, -1)
    if scan is not None and r == dim:
        thetas, offsets, _ = scan
    else:
        dirs_sub = antipodal_directions(r, cfg.directions_for(dim) if r == dim
                                        else max(cfg.directions_for(2), 64))
        lifted = dirs_sub @ basis.T
        thetas, offsets, _ = _scan_slopes(source, lifted, cfg)
    if collect is not None and r == dim:
        collect["scan"] = (thetas, offsets)
    if not np.any(np.isfinite(offsets)):
        raise AllUnderflow("no usable support direction")
    # subspace-frame offsets: subtract the origin shift
    shift = thetas @ origin
    h_sub = offsets - shift
    dirs_used = thetas @ basis  # back to subspace coordinates (approx unit)

    flat_tol = max(0.5 * cfg.tol_hull * diam, 1e-9)
    pair_ok = np.isfinite(h_sub[0::2]) & np.isfinite(h_sub[1::2])
    widths = np.where(pair_ok, h_sub[0::2] + h_sub[1::2], np.inf)
    k_min = int(np.argmin(widths))
    if widths[k_min] < flat_tol and r >= 1:
        u_sub = dirs_used[2 * k_min]
        u_sub = u_sub / np.linalg.norm(u_sub)
        c = 0.5 * (h_sub[2 * k_min] - h_sub[2 * k_min + 1])
        new_origin = origin + (basis @ u_sub) * c
        comp = _complement_basis(u_sub)
        new_basis = basis @ comp
        return _vertices_from_support(source, cfg, new_basis, new_origin, collect)

    ok = np.isfinite(h_sub)
    normals = dirs_used[ok]
    offs = h_sub[ok]
    norms = np.linalg.norm(normals, axis=1)
    normals = normals / norms[:, None]
    offs = offs / norms

    corners_sub = (domain.corners() - origin) @ basis
    lo = corners_sub.min(axis=0) - diam * 1e-3
    hi = corners_sub.max(axis=0) + diam * 1e-3

    merge_tol = 0.5 * cfg.tol_hull * diam
    if r == 1:
        a = -offs[normals[:, 0] < 0].min(initial=np.inf)
        b = offs[normals[:, 0] > 0].min(initial=np.inf)
        a = max(a, lo[0])
        b = min(b, hi[0])
        if b < a:
            raise DegenerateHull("empty support interval")
        if b - a <= merge_tol:
            verts_sub = np.array([[0.5 * (a + b)]])
        else:
            verts_sub = np.array([[a], [b]])
    elif r == 2:
        poly = halfspace_polygon_vertices(normals, offs, lo, hi)
        if poly.shape[0] == 0:
            raise DegenerateHull("empty half-space intersection")
        merged = merge_close_vertices(poly, merge_tol)
        verts_sub = extreme_points(merged)
    else:
        raw = halfspace_polytope_vertices_3d(normals, offs, lo, hi)
        merged = merge_close_vertices(raw, merge_tol)
        verts_sub = extreme_points(merged)
    return origin + verts_sub @ basis.T


def _validate_candidates(source: MomentSource, candidates: np.ndarray,
                         halfspaces, cfg: ReconstructionConfig) -> np.ndarray:
    """Keep candidate vertices confirmed by the probe data.

    Each candidate is probed along a direction separating it from the
    other candidates; the measured dominant node replaces it.  Sampled
    intersection artifacts either refine onto a true vertex (kept once)
    or fail to produce a stable single-node ratio (dropped).
    """
    diam = source.domain.diameter
    poly = Polytope(dim=source.dim, vertices=candidates,
                    halfspaces=halfspaces, witnesses=candidates)
    exclude = 0.5 * cfg.tol_hull * diam
    refined = []
    reach = 0.2 * diam
    lo = np.asarray(source.domain.lo) - reach
    hi = np.asarray(source.domain.hi) + reach
    for j in range(candidates.shape[0]):
        found = _best_node_estimate(source, poly, j, cfg, exclude)
        if found is None:
            continue
        _, est = found
        if not est.ratio_converged:
            continue
        if abs(est.amplitude) <= cfg.tol_value / 2:
            continue
        if np.any(est.position < lo) or np.any(est.position > hi):
            continue
        refined.append(est.position)
    if not refined:
        return candidates
    verts = merge_close_vertices(np.asarray(refined), 1e-5 * diam)
    return extreme_points(verts)


def recover_hull(source: MomentSource, cfg: ReconstructionConfig,
                 scan=None) -> Polytope:
    """Convex hull of the source's mass support from support slopes.

    Geometric candidates come from the sampled half-space intersection;
    each is then validated and sharpened against the moment data, which
    removes the shallow direction-sampling artifacts and pins vertices
    to probe precision.
    """
    dim = source.dim
    collect: dict = {}
    candidates = _vertices_from_support(source, cfg, np.eye(dim),
                                        np.zeros(dim), collect, scan=scan)
    thetas, offsets = collect.get("scan", (None, None))
    if thetas is None:
        dirs = antipodal_directions(dim, cfg.directions_for(dim))
        thetas, offsets, _ = _scan_slopes(source, dirs, cfg)
    ok = np.isfinite(offsets)
    halfspaces = tuple((thetas[k], float(offsets[k]))
                       for k in range(len(offsets)) if ok[k])
    vertices = _validate_candidates(source, candidates, halfspaces, cfg)
    return Polytope(dim=dim, vertices=vertices, halfspaces=halfspaces,
                    witnesses=candidates)


def separating_directions(polytope: Polytope, j: int,
                          tol_sep: float = SEPARATION_TOL,
                          exclude_radius: float = 0.0,
                          limit: int = 5) -> list[np.ndarray]:
    """Candidate unit directions separating vertex j, best margin first.

    Margins are taken against the witness cloud when available, so
    near-tie directions with boundary points the vertex list does not
    carry are rejected.  Points within exclude_radius of vertex j count
    as the vertex itself.
    """
    verts = polytope.vertices
    if verts.shape[0] == 0:
        raise ValueError("polytope has no vertices")
    w = verts[j]
    cloud = [np.delete(verts, j, axis=0)]
    if polytope.witnesses is not None:
        cloud.append(polytope.witnesses)
    others = np.vstack(cloud)
    if others.shape[0]:
        far = np.linalg.norm(others - w, axis=1) > max(exclude_radius, 1e-12)
        others = others[far]
    if others.shape[0] == 0:
        theta = np.zeros(polytope.dim)
        theta[0] = 1.0
        return [theta]

    def margin(theta):
        return float(theta @ w - np.max(others @ theta))

    candidates = []
    c = w - verts.mean(axis=0)
    if np.linalg.norm(c) > 0:
        candidates.append(c / np.linalg.norm(c))
    if polytope.halfspaces:
        # sampled directions whose maximizer is w span its normal cone
        normals = np.asarray([n for n, _ in polytope.halfspaces])
        margins = normals @ w - np.max(normals @ others.T, axis=1)
        cone = normals[margins > 0]
        if cone.shape[0]:
            avg = cone.mean(axis=0)
            if np.linalg.norm(avg) > 0:
                candidates.append(avg / np.linalg.norm(avg))
            best = cone[np.argmax((cone @ w)
                                  - np.max(cone @ others.T, axis=1))]
            candidates.append(best)
    rng = np.random.default_rng(0)
    base = candidates[0] if candidates else np.eye(polytope.dim)[0]
    for _ in range(32):
        cand = base + 0.5 * rng.standard_normal(polytope.dim)
        norm = np.linalg.norm(cand)
        if norm > 0:
            candidates.append(cand / norm)
    scored = sorted(((margin(t), k, t) for k, t in enumerate(candidates)),
                    key=lambda item: -item[0])
    out = []
    for m, _, theta in scored:
        if m <= tol_sep:
            break
        if all(abs(float(theta @ prev)) < 1.0 - 1e-10 for prev in out):
            out.append(theta)
            if len(out) == limit:
                break
    if not out:
        raise NoSeparation(f"no direction separates vertex {j} "
                           "(vertices may be clustered)")
    return out


def separating_direction(polytope: Polytope, j: int,
                         tol_sep: float = SEPARATION_TOL,
                         exclude_radius: float = 0.0) -> np.ndarray:
    """Best single separating direction for vertex j."""
    return separating_directions(polytope, j, tol_sep, exclude_radius,
                                 limit=1)[0]


def _companion_psis(theta: np.ndarray, extra: str | None, count: int):
    """count admissible psi choices orthogonal to theta, pairwise distinct."""
    psi1 = make_admissible_pair(theta, extra=extra)
    if count == 1:
        return [psi1]
    psis = [psi1]
    n = theta.shape[0]
    if n == 2:
        raise ValueError("only one independent psi exists in dimension 2")
    axis = np.cross(theta, psi1)
    axis = axis / np.linalg.norm(axis)
    for ang in (1.2, 0.7, 1.9, 2.4, 0.35, 2.9):
        cand = np.cos(ang) * psi1 + np.sin(ang) * axis
        cand = cand / np.linalg.norm(cand)
        if not is_admissible(theta, cand):
            continue
        if extra is not None:
            from .probes import _extra_condition_margin
            if _extra_condition_margin(theta, cand, extra) <= ADMISSIBLE_TOL:
                continue
        if all(abs(float(cand @ p)) < 1.0 - 1e-8 for p in psis):
            psis.append(cand)
            if len(psis) == count:
                return psis
    raise NoAdmissiblePsi(f"could not find {count} admissible psi for "
                          f"theta={theta.tolist()}")


@dataclass(frozen=True)
class NodeEstimate:
    """Dominant-node amplitude and position along one probe ray."""

    amplitude: complex
    position: np.ndarray
    ratio_converged: bool
    imag_rel: float
    mu_mismatch: float
    ratio_gap: float = 0.0


@dataclass(frozen=True)
class VertexValue:
    value: float
    converged: bool
    imag_rel: float
    position: np.ndarray


def _measure_mu(source: MomentSource, theta, psi, a_top: float,
                domain_reach: float, pos_unc: float):
    """Exponent of the dominant node: (theta, w) + i (psi, w).

    The phase slope is measured twice below the top of the trusted alpha
    range (never beyond it, where linear-space sources lose accuracy): a
    coarse step whose branch is unambiguous for any node inside the
    domain, then a finer step unwrapped against the coarse value.
    """
    delta1 = min(np.pi / (2.0 * domain_reach), 0.2 * a_top)
    delta2 = min(np.pi / (4.0 * pos_unc), 0.4 * a_top)
    grid = np.array([a_top - delta2, a_top - delta1, a_top])
    logs = _usable_logs(source, grid, theta, psi)
    if not np.all(np.isfinite(logs.real)):
        return None, None

    def wrap(phase):
        return (phase + np.pi) % (2.0 * np.pi) - np.pi

    # log phases are principal values; the coarse step is small enough
    # that the true phase increment lies within (-pi, pi]
    mu1 = complex((logs[2].real - logs[1].real) / delta1,
                  wrap(logs[2].imag - logs[1].imag) / delta1)
    if delta2 <= delta1:
        return mu1, logs[2]
    mu2_imag_raw = wrap(logs[2].imag - logs[0].imag) / delta2
    period = 2.0 * np.pi / delta2
    imag = mu2_imag_raw + period * np.round((mu1.imag - mu2_imag_raw) / period)
    mu2_real = (logs[2].real - logs[0].real) / delta2
    return complex(mu2_real, imag), logs[2]


def _best_node_estimate(source: MomentSource, poly: Polytope, j: int,
                        cfg: ReconstructionConfig, exclude: float):
    """(theta, estimate) for vertex j, preferring converged directions.

    Iterates the separating-direction candidates and returns the first
    one whose probe ratio is stable; falls back to the best-margin
    estimate when none converges.
    """
    try:
        thetas = separating_directions(poly, j, exclude_radius=exclude)
    except NoSeparation:
        return None
    n_psi = 1 if source.dim == 2 else 2
    best = None
    for theta in thetas:
        try:
            theta2, _ = _admissible_theta_psi(theta, source.admissible_extra)
            psis = _companion_psis(theta2, source.admissible_extra, n_psi)
        except NoAdmissiblePsi:
            continue
        est = _estimate_node(source, theta2, psis, poly.vertices[j], cfg)
        if best is None or est.ratio_gap < best[1].ratio_gap:
            best = (theta2, est)
    return best


def _estimate_node_at(source: MomentSource, theta: np.ndarray,
                      psis: list[np.ndarray], w_approx: np.ndarray,
                      cfg: ReconstructionConfig, a_top: float,
                      a_prev: float) -> NodeEstimate | None:
    diam = source.domain.diameter
    pos_unc = max(cfg.tol_hull * diam, 1e-9)
    corners = source.domain.corners()
    domain_reach = float(np.max(np.linalg.norm(corners, axis=1))) + 0.1 * diam

    rows = [theta]
    rhs = [0.0]
    mus = []
    log_top = None
    for idx, psi in enumerate(psis):
        mu, log_at_top = _measure_mu(source, theta, psi, a_top,
                                     domain_reach, pos_unc)
        if mu is None:
            return None
        mus.append(mu)
        if idx == 0:
            rhs[0] = mu.real
            log_top = log_at_top
        rows.append(psi)
        rhs.append(mu.imag)
    w_fine, *_ = np.linalg.lstsq(np.asarray(rows), np.asarray(rhs), rcond=None)
    mu0 = mus[0]
    mu_expected = float(theta @ w_approx) + 1j * float(psis[0] @ w_approx)
    mu_mismatch = abs(mu0 - mu_expected)

    amp = np.exp(log_top - a_top * mu0)
    # stability across three grid points: a single pair can be fooled by
    # an unresolved two-node mixture
    a_prev2 = a_prev ** 2 / a_top
    probes = _usable_logs(source, np.array([a_prev2, a_prev]),
                          theta, psis[0])
    amps = [amp]
    for a_k, log_k in zip((a_prev2, a_prev), probes):
        amps.append(np.exp(log_k - a_k * mu0)
                    if np.isfinite(log_k.real) else 0j)
    scale = max(max(abs(a) for a in amps), cfg.tol_value)
    gap = float(max(abs(amps[0] - amps[1]), abs(amps[0] - amps[2]),
                    abs(amps[1] - amps[2])) / scale)
    ratio_converged = bool(gap <= cfg.tol_value)
    imag_rel = float(abs(amp.imag) / max(abs(amp), 1e-300))
    return NodeEstimate(complex(amp), w_fine, ratio_converged,
                        imag_rel, mu_mismatch, gap)


def _estimate_node(source: MomentSource, theta: np.ndarray,
                   psis: list[np.ndarray], w_approx: np.ndarray,
                   cfg: ReconstructionConfig) -> NodeEstimate:
    """Amplitude and position of the node dominating direction theta.

    The measured exponent is divided out of the log moment, so the value
    does not inherit exponential factors from hull inaccuracy; stability
    of that ratio across two grid alphas is the convergence signal (it
    fails when no single node dominates).  When the top of the grid is
    unstable, e.g. because earlier subtraction residues at larger
    support values are amplified there, the estimation point steps down
    the grid until the ratio settles.
    """
    alphas = cfg.alphas
    logs = _usable_logs(source, alphas, theta, psis[0])
    finite = np.where(np.isfinite(logs.real))[0]
    if finite.size == 0:
        return NodeEstimate(0j, w_approx, True, 0.0, 0.0)
    k_top = int(finite[-1])
    best = None
    for k in range(k_top, max(k_top - 9, 0), -2):
        a_top = float(alphas[k])
        a_prev = float(alphas[max(k - 1, 0)])
        est = _estimate_node_at(source, theta, psis, w_approx, cfg,
                                a_top, a_prev)
        if est is None:
            continue
        if best is None or est.ratio_gap < best.ratio_gap:
            best = est
        if est.ratio_converged:
            return est
    if best is None:
        return NodeEstimate(0j, w_approx, False, 0.0, np.inf)
    return best


def vertex_value(source: MomentSource, theta_j, w_j,
                 cfg: ReconstructionConfig) -> VertexValue:
    """Mass value at a separated hull vertex (scalar sources).

    converged asserts both a stable probe ratio and that the dominant
    node actually sits at w_j (within the hull tolerance).
    """
    theta_j, _ = _admissible_theta_psi(np.asarray(theta_j, dtype=float),
                                       source.admissible_extra)
    w_j = np.asarray(w_j, dtype=float)
    n_psi = 1 if source.dim == 2 else 2
    psis = _companion_psis(theta_j, source.admissible_extra, n_psi)
    est = _estimate_node(source, theta_j, psis, w_j, cfg)
    pos_unc = max(cfg.tol_hull * source.domain.diameter, 1e-9)
    converged = est.ratio_converged and est.mu_mismatch <= 2.0 * pos_unc + 1e-9
    return VertexValue(value=float(est.amplitude.real),
                       converged=converged,
                       imag_rel=est.imag_rel,
                       position=est.position)


# ---------------------------------------------------------------------------
# Peeling


@dataclass
class RoundRecord:
    hull_vertices: np.ndarray
    accepted: list
    slope_table: list


@dataclass
class ReconstructionReport:
    domain: Box
    config: ReconstructionConfig
    rounds: list = dc_field(default_factory=list)
    masses: PointMassField | None = None
    field: CheckeredField | None = None
    completed: bool = False
    diagnostics: dict = dc_field(default_factory=dict)

    def to_obj(self) -> dict:
        from .fields import box_to_obj, field_to_obj, point_masses_to_obj

        obj = {
            "domain": box_to_obj(self.domain),
            "config": {
                "alpha0": self.config.alpha0,
                "ratio": self.config.ratio,
                "count": self.config.count,
                "directions": self.config.directions,
                "window": self.config.window,
                "tol_value": self.config.tol_value,
                "tol_hull": self.config.tol_hull,
                "max_peel_rounds": self.config.max_peel_rounds,
            },
            "completed": self.completed,
            "diagnostics": self.diagnostics,
            "rounds": [
                {
                    "hull_vertices": r.hull_vertices.tolist(),
                    "accepted": r.accepted,
                    "slopes": r.slope_table,
                }
                for r in self.rounds
            ],
        }
        if self.masses is not None:
            obj["masses"] = point_masses_to_obj(self.masses)
        if self.field is not None:
            obj["field"] = field_to_obj(self.field)
        return obj


def _polish_recoveries(source: MomentSource, pts: list, vals: list,
                       cfg: ReconstructionConfig, witnesses=None,
                       sweeps: int = 2):
    """Re-estimate each recovered node against the others' corrections.

    Finite-alpha vertex values carry contamination from neighboring
    nodes; refitting every node with the current estimates of the others
    subtracted drives the correction toward self-consistency (the
    contamination factor shrinks each sweep).
    """
    if len(pts) < 2:
        return pts, vals
    dim = source.dim
    pos_unc = max(cfg.tol_hull * source.domain.diameter, 1e-9)
    exclude = 0.5 * cfg.tol_hull * source.domain.diameter
    for _ in range(sweeps):
        for i in range(len(pts)):
            others = [k for k in range(len(pts)) if k != i]
            pm = point_mass_field(dim, np.asarray([pts[k] for k in others]),
                                  np.asarray([vals[k] for k in others]),
                                  drop_tol=0.0)
            src_i = subtract_masses(source, pm, drop_tol=cfg.tol_value / 2)
            poly = Polytope(dim=dim, vertices=np.asarray(pts), halfspaces=(),
                            witnesses=witnesses)
            found = _best_node_estimate(src_i, poly, i, cfg, exclude)
            if found is None:
                continue
            _, est = found
            if not est.ratio_converged:
                continue
            if np.linalg.norm(est.position - pts[i]) > 3.0 * pos_unc:
                continue
            if abs(est.amplitude) <= cfg.tol_value / 2:
                continue
            pts[i] = est.position
            vals[i] = float(est.amplitude.real)
    return pts, vals


def _dedupe_recoveries(points: list, values: list, tol: float):
    """Collapse repeat recoveries of one node to a single mean value.

    Spurious hull vertices (noisy data) refine onto an already recovered
    node; summing would double its mass, so duplicates average instead.
    """
    pts = np.asarray(points)
    vals = np.asarray(values)
    out_p: list[np.ndarray] = []
    out_v: list = []
    for p, v in zip(pts, vals):
        for k, q in enumerate(out_p):
            if np.linalg.norm(p - q) <= tol:
                out_v[k] = (out_v[k] + v) / 2.0
                break
        else:
            out_p.append(p)
            out_v.append(v)
    return np.asarray(out_p), np.asarray(out_v)


def _live_directions(source: MomentSource, cfg: ReconstructionConfig):
    """Slope scan + liveness of each direction against the domain floor."""
    dirs = antipodal_directions(source.dim, cfg.directions_for(source.dim))
    thetas, offsets, amp_logs = _scan_slopes(source, dirs, cfg)
    tol_abs = cfg.tol_hull * source.domain.diameter
    live = _live_mask(source.domain, thetas, offsets, amp_logs, tol_abs,
                      cfg.tol_value)
    return thetas, offsets, amp_logs, live


def peel(source: MomentSource, domain: Box,
         cfg: ReconstructionConfig | None = None) -> PointMassField:
    """Recover all corner masses of a scalar source by repeated hulls."""
    pm, _ = peel_with_report(source, domain, cfg)
    return pm


def peel_with_report(source: MomentSource, domain: Box,
                     cfg: ReconstructionConfig | None = None):
    cfg = cfg or ReconstructionConfig.oracle()
    report = ReconstructionReport(domain=domain, config=cfg)
    dim = source.dim
    points: list[np.ndarray] = []
    values: list[float] = []
    witness_cloud: list[np.ndarray] = []

    def corrected_source():
        if not points:
            return source
        pm = point_mass_field(dim, np.asarray(points), np.asarray(values),
                              drop_tol=0.0)
        return subtract_masses(source, pm, drop_tol=cfg.tol_value / 2)

    for _ in range(cfg.max_peel_rounds):
        current = corrected_source()
        thetas, offsets, amp_logs, live = _live_directions(current, cfg)
        slope_table = [
            {"theta": thetas[k].tolist(),
             "slope": None if not np.isfinite(offsets[k]) else float(offsets[k]),
             "live": bool(live[k])}
            for k in range(len(offsets))
        ]
        if not np.any(live):
            report.completed = True
            report.rounds.append(RoundRecord(np.empty((0, dim)), [], slope_table))
            break
        hull = recover_hull(current, cfg, scan=(thetas, offsets, amp_logs))
        if hull.witnesses is not None:
            witness_cloud.extend(hull.witnesses)
        merge_radius = 0.5 * cfg.tol_hull * domain.diameter
        pos_unc = max(cfg.tol_hull * domain.diameter, 1e-9)
        accepted = []
        correction_pts = []
        correction_vals = []
        for j in range(hull.n_vertices):
            found = _best_node_estimate(current, hull, j, cfg, merge_radius)
            if found is None:
                continue
            _, est = found
            value = float(est.amplitude.real)
            converged = (est.ratio_converged
                         and est.mu_mismatch <= 2.0 * pos_unc + 1e-9)
            entry = {
                "vertex": hull.vertices[j].tolist(),
                "position": est.position.tolist(),
                "value": value,
                "converged": converged,
                "imag_rel": est.imag_rel,
            }
            accepted.append(entry)
            if abs(value) > cfg.tol_value and converged:
                correction_pts.append(est.position)
                correction_vals.append(value)
        report.rounds.append(RoundRecord(hull.vertices, accepted, slope_table))
        if not correction_pts:
            report.diagnostics["stalled"] = True
            raise PeelStalled(
                "round recovered no vertex value above tolerance while "
                "moments remain live (noisy or inconsistent data)", report)
        cpts, cvals = _dedupe_recoveries(correction_pts, correction_vals,
                                         merge_radius)
        for p, v in zip(cpts, cvals):
            # a re-recovered node carries a residual correction on top of
            # its earlier estimate
            for k, q in enumerate(points):
                if np.linalg.norm(p - q) <= merge_radius:
                    values[k] += v
                    break
            else:
                points.append(p)
                values.append(float(v))
        points, values = _polish_recoveries(
            source, points, values, cfg,
            witnesses=np.asarray(witness_cloud) if witness_cloud else None)
    else:
        report.completed = False
        report.diagnostics["max_rounds_reached"] = True

    if points:
        # positions carry the per-round probe precision; snap coordinates
        # at a fraction of the hull tolerance so the marked grid aligns
        merge_tol = max(1e-9 * domain.diameter,
                        0.02 * cfg.tol_hull * domain.diameter)
        pm = point_mass_field(dim, np.asarray(points), np.asarray(values),
                              merge_tol=merge_tol, drop_tol=cfg.tol_value / 2)
    else:
        pm = PointMassField(dim, np.empty((0, dim)), np.empty(0))
    report.masses = pm
    return pm, report


def reconstruct_scalar(source: MomentSource, domain: Box,
                       cfg: ReconstructionConfig | None = None) -> CheckeredField:
    """Full scalar pipeline: peel the masses, then invert the corner map."""
    field, _ = reconstruct_scalar_with_report(source, domain, cfg)
    return field


def reconstruct_scalar_with_report(source: MomentSource, domain: Box,
                                   cfg: ReconstructionConfig | None = None):
    cfg = cfg or ReconstructionConfig.oracle()
    pm, report = peel_with_report(source, domain, cfg)
    scale = max(1.0, float(np.max(np.abs(pm.masses))) if pm.size else 1.0)
    field = reconstruct_field(pm, domain, drop_tol=cfg.tol_value / 2,
                              check_tol=5.0 * cfg.tol_value * scale)
    report.field = field
    return field, report


# ---------------------------------------------------------------------------
# Vector (elasticity oracle) path


def curl_sources(pm: PointMassField, domain: Box):
    """The two curl-pairing oracle sources of a 3-D vector mass field."""
    return (CurlMomentSource(pm, "curl-x", domain),
            CurlMomentSource(pm, "curl-y", domain))


def _solve_pair(kappas, amps, unknown_cols, tol):
    """Solve [kappa rows] (f_a, f_b) = amps for the two unknown components."""
    A = np.asarray([[k[unknown_cols[0]], k[unknown_cols[1]]] for k in kappas])
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) <= tol:
        raise SingularSystem(f"probe pair determinant {abs(det):.2e} too small")
    sol = np.linalg.solve(A, np.asarray(amps))
    return sol


def vertex_values_vector(sources, theta_j, w_j, cfg: ReconstructionConfig,
                         return_diagnostics: bool = False):
    """All three vector components at a separated hull vertex.

    The curl-x pairing with two psi choices gives a 2x2 system for
    (f2, f3); curl-y gives one for (f1, f3).  The two f3 estimates must
    agree within tol_value.
    """
    source_x, source_y = sources
    w_j = np.asarray(w_j, dtype=float)

    def component_pair(source, cols):
        theta, _ = _admissible_theta_psi(np.asarray(theta_j, dtype=float),
                                         source.admissible_extra)
        psis = _companion_psis(theta, source.admissible_extra, 2)
        amps = []
        kappas = []
        for psi in psis:
            est = _estimate_node(source, theta, psis=[psi], w_approx=w_j, cfg=cfg)
            amps.append(est.amplitude)
            kappas.append(theta + 1j * psi)
        return _solve_pair(kappas, amps, cols, ADMISSIBLE_TOL)

    # curl-x weights: f2 * kappa3 - f3 * kappa2  -> unknowns (f2, f3)
    f2, f3x = component_pair(source_x, (2, 1))
    f2, f3x = f2, -f3x
    # curl-y weights: f3 * kappa1 - f1 * kappa3  -> unknowns (f3, f1)
    f3y, f1 = component_pair(source_y, (0, 2))
    f3y, f1 = f3y, -f1

    scale = max(abs(f3x), abs(f3y), 1.0)
    f3_gap = abs(f3x - f3y)
    if f3_gap > 10 * cfg.tol_value * scale:
        raise InconsistentF3(
            f"f3 from curl-x ({f3x:.6g}) and curl-y ({f3y:.6g}) disagree")
    f3 = 0.5 * (f3x + f3y)
    values = np.array([f1.real, f2.real, f3.real])
    if return_diagnostics:
        imag = max(abs(f1.imag), abs(f2.imag), abs(f3.imag))
        return values, {"f3_gap": float(f3_gap), "imag_max": float(imag)}
    return values


def peel_vector(sources, domain: Box,
                cfg: ReconstructionConfig | None = None):
    """Joint peeling of the two curl sources; returns vector masses."""
    cfg = cfg or ReconstructionConfig.oracle()
    report = ReconstructionReport(domain=domain, config=cfg)
    src_x, src_y = sources
    points: list[np.ndarray] = []
    values: list[np.ndarray] = []

    for _ in range(cfg.max_peel_rounds):
        live_any = False
        vertex_sets = []
        witness_sets = []
        for src in (src_x, src_y):
            thetas, offsets, amp_logs, live = _live_directions(src, cfg)
            if np.any(live):
                live_any = True
                sub_hull = recover_hull(src, cfg,
                                        scan=(thetas, offsets, amp_logs))
                vertex_sets.append(sub_hull.vertices)
                if sub_hull.witnesses is not None:
                    witness_sets.append(sub_hull.witnesses)
        if not live_any:
            report.completed = True
            break
        merge_radius = 0.5 * cfg.tol_hull * domain.diameter
        union = np.vstack(vertex_sets)
        verts = extreme_points(merge_close_vertices(union, merge_radius))
        witnesses = np.vstack(witness_sets) if witness_sets else None
        hull = Polytope(dim=3, vertices=verts, halfspaces=(),
                        witnesses=witnesses)
        accepted = []
        correction_pts = []
        correction_vals = []
        for j in range(hull.n_vertices):
            try:
                theta_j = separating_direction(hull, j,
                                               exclude_radius=merge_radius)
            except NoSeparation:
                continue
            vec = vertex_values_vector((src_x, src_y), theta_j,
                                       hull.vertices[j], cfg)
            accepted.append({"vertex": hull.vertices[j].tolist(),
                             "value": vec.tolist()})
            if np.linalg.norm(vec) > cfg.tol_value:
                correction_pts.append(hull.vertices[j])
                correction_vals.append(vec)
        report.rounds.append(RoundRecord(hull.vertices, accepted, []))
        if not correction_pts:
            report.diagnostics["stalled"] = True
            raise PeelStalled("vector peeling made no progress", report)
        cpts, cvals = _dedupe_recoveries(correction_pts, correction_vals,
                                         merge_radius)
        correction = point_mass_field(3, cpts, cvals, drop_tol=0.0)
        points.extend(cpts)
        values.extend(cvals)
        src_x = subtract_masses(src_x, correction, drop_tol=cfg.tol_value / 2)
        src_y = subtract_masses(src_y, correction, drop_tol=cfg.tol_value / 2)
    else:
        report.completed = False
        report.diagnostics["max_rounds_reached"] = True

    if points:
        pm = point_mass_field(3, np.asarray(points), np.asarray(values),
                              drop_tol=cfg.tol_value / 2)
    else:
        pm = PointMassField(3, np.empty((0, 3)), np.empty((0, 3)))
    report.masses = pm
    return pm, report


def reconstruct_vector(sources, domain: Box,
                       cfg: ReconstructionConfig | None = None) -> VectorCheckeredField:
    """Vector pipeline: joint curl peeling, then per-component inversion."""
    pm, _ = peel_vector(sources, domain, cfg)
    cfg = cfg or ReconstructionConfig.oracle()
    if pm.size == 0:
        empty = CheckeredField(domain, ())
        return VectorCheckeredField((empty, empty, empty))
    scale = max(1.0, float(np.max(np.abs(pm.masses))))
    comps = tuple(
        reconstruct_field(pm.component(k), domain, drop_tol=cfg.tol_value / 2,
                          check_tol=5.0 * cfg.tol_value * scale)
        for k in range(3))
    return VectorCheckeredField(comps)
