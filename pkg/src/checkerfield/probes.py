"""Exponential harmonic probes and moment functionals.

A probe is e(x) = exp(alpha * (theta, x) + i * alpha * (psi, x)) for an
orthonormal pair (theta, psi).  The pairing of a source with a probe can
be evaluated three ways: in closed form from the source's corner masses,
by volume quadrature, or from boundary Cauchy data via Green's formula.
All three agree on the same underlying field; the closed form reads

    P = C(alpha, theta, psi) * sum_v  mass(v) * e(v),
    C = alpha^(-n) * prod_l 1 / (theta_l + i * psi_l),

which is well defined whenever the probe plane is not orthogonal to a
coordinate axis (the admissible case).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConditionViolated,
    MalformedTrace,
    NoAdmissiblePsi,
    NotAdmissible,
    Overflow,
)
from .fields import Box, CheckeredField, PointMassField, point_mass_field
from .quadrature import box_rule
from .validation import as_points, as_unit_vector, check_orthogonal

ADMISSIBLE_TOL = 1e-6
MAX_EXPONENT = 709.0  # log of the largest double


@dataclass(frozen=True)
class ProbeParams:
    """Probe parameters (alpha, theta, psi); theta, psi orthonormal."""

    alpha: float
    theta: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        if self.alpha == 0.0:
            raise ValueError("alpha must be nonzero")
        theta = as_unit_vector(self.theta, name="theta")
        psi = as_unit_vector(self.psi, len(theta), name="psi")
        check_orthogonal(theta, psi)
        theta.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "psi", psi)

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


def probe(alpha: float, theta, psi) -> ProbeParams:
    return ProbeParams(alpha, np.asarray(theta, dtype=float),
                       np.asarray(psi, dtype=float))


def probe_eval(p: ProbeParams, x) -> complex:
    """Probe value at a point; raises Overflow beyond the double range."""
    return complex(probe_eval_many(p, np.atleast_2d(np.asarray(x, dtype=float)))[0])


def probe_eval_many(p: ProbeParams, X) -> np.ndarray:
    X = as_points(X, p.dim)
    growth = p.alpha * (X @ p.theta)
    if np.any(growth > MAX_EXPONENT):
        raise Overflow(f"probe exponent {growth.max():.1f} exceeds the "
                       "floating-point range; rescale alpha")
    phase = p.alpha * (X @ p.psi)
    return np.exp(growth) * (np.cos(phase) + 1j * np.sin(phase))


def probe_gradient(p: ProbeParams, x) -> np.ndarray:
    """Gradient of the probe: alpha * (theta + i psi) * e(x)."""
    e = probe_eval(p, x)
    return p.alpha * (p.theta + 1j * p.psi) * e


def is_admissible(theta, psi, tol: float = ADMISSIBLE_TOL) -> bool:
    """True iff |theta_l + i psi_l| > tol for every axis l."""
    theta = as_unit_vector(theta, name="theta")
    psi = as_unit_vector(psi, len(theta), name="psi")
    return bool(np.all(np.hypot(theta, psi) > tol))


def _extra_condition_margin(theta: np.ndarray, psi: np.ndarray,
                            extra: str | None) -> float:
    if extra is None:
        return np.inf
    if extra == "elasticity-23":
        return abs(theta[2] * psi[1] - theta[1] * psi[2])
    if extra == "elasticity-13":
        return abs(theta[2] * psi[0] - theta[0] * psi[2])
    raise ValueError(f"unknown constraint tag {extra!r}")


def make_admissible_pair(theta, extra: str | None = None,
                         tol: float = ADMISSIBLE_TOL) -> np.ndarray:
    """Companion unit psi orthogonal to theta making the pair admissible.

    Tries a fixed list of diagonal directions projected onto the
    orthogonal complement, then 16 seeded random directions in the
    complement.  The optional tag adds the curl-pairing determinant
    condition on top of admissibility.
    """
    theta = as_unit_vector(theta, name="theta")
    n = theta.shape[0]
    candidates = []
    if n == 2:
        candidates.append(np.array([-theta[1], theta[0]]))
    for pattern in np.ndindex(*(2,) * n):
        cand = np.where(np.asarray(pattern) == 0, 1.0, -1.0)
        if cand[0] < 0:
            continue
        candidates.append(cand / np.linalg.norm(cand))
    rng = np.random.default_rng(0)
    for _ in range(16):
        candidates.append(rng.standard_normal(n))
    for cand in candidates:
        psi = cand - np.dot(cand, theta) * theta
        norm = np.linalg.norm(psi)
        if norm < 1e-8:
            continue
        psi = psi / norm
        if (is_admissible(theta, psi, tol)
                and _extra_condition_margin(theta, psi, extra) > tol):
            return psi
    raise NoAdmissiblePsi(
        f"no admissible psi for theta={theta.tolist()} (extra={extra!r}); "
        "perturb theta and retry")


def moment_prefactor(alpha: float, theta: np.ndarray, psi: np.ndarray) -> complex:
    """The constant C relating the moment to the corner-mass sum."""
    kappa = theta + 1j * psi
    if np.any(np.abs(kappa) <= ADMISSIBLE_TOL):
        raise NotAdmissible(f"pair theta={theta.tolist()} psi={psi.tolist()} "
                            "is orthogonal to a coordinate axis")
    return alpha ** (-len(theta)) / np.prod(kappa)


def log_node_sum(points: np.ndarray, masses: np.ndarray,
                 alphas: np.ndarray, theta: np.ndarray,
                 psi: np.ndarray) -> np.ndarray:
    """log of  sum_v mass(v) exp(alpha ((theta, v) + i (psi, v)))  per alpha.

    Evaluated in the log domain so alpha is limited only by the precision
    of alpha * (theta, v), not by the double exponent range.  Masses may
    be complex.  Returns -inf (real part) where the sum vanishes.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    out = np.full(alphas.shape, -np.inf + 0j, dtype=complex)
    mask = np.abs(masses) > 0
    if points.shape[0] == 0 or not np.any(mask):
        return out
    pts = points[mask]
    with np.errstate(divide="ignore"):
        logm = np.log(masses[mask].astype(complex))
    mu = pts @ theta + 1j * (pts @ psi)
    t = alphas[:, None] * mu[None, :] + logm[None, :]
    tmax = t.real.max(axis=1)
    s = np.exp(t - tmax[:, None]).sum(axis=1)
    nz = np.abs(s) > 0
    with np.errstate(divide="ignore"):
        out[nz] = tmax[nz] + np.log(s[nz])
    return out


def moment_analytic(pm: PointMassField, p: ProbeParams) -> complex:
    """Closed-form moment from corner masses (admissible pairs only)."""
    if pm.is_vector:
        raise ValueError("moment_analytic expects scalar masses; "
                         "use vector_moment_analytic")
    if not is_admissible(p.theta, p.psi):
        raise NotAdmissible("probe pair is not admissible")
    pref = moment_prefactor(p.alpha, p.theta, p.psi)
    if pm.size == 0:
        return 0j
    log_sum = log_node_sum(pm.points, pm.masses, np.array([p.alpha]),
                           p.theta, p.psi)[0]
    if log_sum.real == -np.inf:
        return 0j
    value = pref * np.exp(log_sum)
    if not np.isfinite(value):
        raise Overflow("analytic moment overflows; evaluate in log space")
    return complex(value)


def moment_quadrature(field: CheckeredField, p: ProbeParams,
                      order: int = 8) -> complex:
    """Volume moment by tensor Gauss panels (alpha * panel diameter <= 2)."""
    total = 0j
    for box, c in field.terms:
        pts, w = box_rule(box, alpha=p.alpha, order=order)
        total += c * np.sum(w * probe_eval_many(p, pts))
    return complex(total)


def moment_boundary(trace, p: ProbeParams) -> complex:
    """Moment from boundary Cauchy data:  sum w (e phi2 - (grad e, nu) phi1)."""
    for attr in ("points", "normals", "weights", "phi1", "phi2"):
        if getattr(trace, attr, None) is None:
            raise MalformedTrace(f"trace is missing {attr}")
    e = probe_eval_many(p, trace.points)
    kappa = p.theta + 1j * p.psi
    dn = p.alpha * (trace.normals @ kappa) * e
    return complex(np.sum(trace.weights * (e * trace.phi2 - dn * trace.phi1)))


_CURL_PAIRS = {"curl-x": (1, 2), "curl-y": (2, 0)}
_CURL_EXTRA = {"curl-x": "elasticity-23", "curl-y": "elasticity-13"}


def curl_weights(masses: np.ndarray, theta: np.ndarray, psi: np.ndarray,
                 kind: str) -> np.ndarray:
    """Per-node complex weights entering the curl pairing."""
    i, j = _CURL_PAIRS[kind]
    kappa = theta + 1j * psi
    return masses[:, i] * kappa[j] - masses[:, j] * kappa[i]


def vector_moment_analytic(pm: PointMassField, p: ProbeParams, kind: str,
                           components=None) -> complex:
    """Closed-form pairing of a vector mass field with a kernel test field.

    kind "curl-x"/"curl-y" pairs with the curl of (e, 0, 0)/(0, e, 0)
    (3-D only); kind "grad" pairs with the gradient of e, restricted to
    the selected components (any dimension).
    """
    if not pm.is_vector:
        raise ValueError("vector_moment_analytic expects vector masses")
    if not is_admissible(p.theta, p.psi):
        raise NotAdmissible("probe pair is not admissible")
    n = pm.dim
    kappa = p.theta + 1j * p.psi
    pref = p.alpha ** (1 - n) / np.prod(kappa)
    if kind in _CURL_PAIRS:
        if n != 3:
            raise ValueError("curl pairings require dimension 3")
        if _extra_condition_margin(p.theta, p.psi, _CURL_EXTRA[kind]) <= ADMISSIBLE_TOL:
            raise ConditionViolated(
                f"determinant condition for {kind} fails for this pair")
        weights = curl_weights(pm.masses, p.theta, p.psi, kind)
    elif kind == "grad":
        sel = range(n) if components is None else np.atleast_1d(components)
        weights = np.zeros(pm.size, dtype=complex)
        for k in sel:
            weights += pm.masses[:, int(k)] * kappa[int(k)]
    else:
        raise ValueError(f"unknown pairing kind {kind!r}")
    if pm.size == 0:
        return 0j
    log_sum = log_node_sum(pm.points, weights, np.array([p.alpha]),
                           p.theta, p.psi)[0]
    if log_sum.real == -np.inf:
        return 0j
    value = pref * np.exp(log_sum)
    if not np.isfinite(value):
        raise Overflow("vector moment overflows; evaluate in log space")
    return complex(value)


# ---------------------------------------------------------------------------
# Moment sources: a uniform evaluation contract for the reconstruction


class MomentSource:
    """Evaluation contract: moments of one source against any probe.

    Subclasses provide log_weighted_sum, the log of P / C on a grid of
    alphas, where C is the source's own closed-form prefactor.  The
    reconstruction works exclusively through this interface.
    """

    dim: int
    domain: Box
    tag = "abstract"
    admissible_extra: str | None = None

    @property
    def max_alpha(self) -> float | None:
        """Largest usable alpha (None when evaluated in the log domain)."""
        return None

    def log_weighted_sum(self, alphas, theta, psi) -> np.ndarray:
        raise NotImplementedError

    def log_noise_floor(self, alphas, theta, psi) -> np.ndarray | None:
        """log of the roundoff floor of log_weighted_sum, or None if exact.

        Linear-space realizations accumulate absolute values scaled by
        machine epsilon; values whose log falls near this floor carry no
        information (the large-alpha instability of boundary data).
        """
        return None

    def moment(self, p: ProbeParams) -> complex:
        pref = self._prefactor(p.alpha, p.theta, p.psi)
        log_sum = self.log_weighted_sum(np.array([p.alpha]), p.theta, p.psi)[0]
        if log_sum.real == -np.inf:
            return 0j
        value = pref * np.exp(log_sum)
        if not np.isfinite(value):
            raise Overflow("moment overflows the double range")
        return complex(value)

    def _prefactor(self, alpha, theta, psi) -> complex:
        return moment_prefactor(alpha, theta, psi)


class AnalyticMomentSource(MomentSource):
    """Oracle source backed by scalar corner masses."""

    tag = "analytic"

    def __init__(self, pm: PointMassField, domain: Box):
        if pm.is_vector:
            raise ValueError("AnalyticMomentSource expects scalar masses")
        self.pm = pm
        self.dim = pm.dim
        self.domain = domain

    def log_weighted_sum(self, alphas, theta, psi):
        return log_node_sum(self.pm.points, self.pm.masses,
                            np.asarray(alphas, dtype=float), theta, psi)

    def subtract(self, correction: PointMassField,
                 drop_tol: float | None = None) -> "AnalyticMomentSource":
        merged = point_mass_field(
            self.dim,
            np.vstack([self.pm.points, correction.points]),
            np.concatenate([self.pm.masses, -correction.masses]),
            **({} if drop_tol is None else {"drop_tol": drop_tol}))
        return AnalyticMomentSource(merged, self.domain)


def _linear_space_alpha_cap(domain: Box) -> float:
    reach = float(np.max(np.linalg.norm(domain.corners(), axis=1)))
    return 0.95 * MAX_EXPONENT / max(reach, 1e-12)


class VolumeMomentSource(MomentSource):
    """Source evaluating moments by volume quadrature over a known field."""

    tag = "volume"

    def __init__(self, field: CheckeredField, order: int = 8):
        self.field = field
        self.dim = field.dim
        self.domain = field.domain
        self.order = order

    @property
    def max_alpha(self) -> float:
        return _linear_space_alpha_cap(self.domain)

    def moment(self, p: ProbeParams) -> complex:
        return moment_quadrature(self.field, p, self.order)

    def log_weighted_sum(self, alphas, theta, psi):
        out = np.empty(np.atleast_1d(alphas).shape, dtype=complex)
        for k, a in enumerate(np.atleast_1d(alphas)):
            p = ProbeParams(float(a), theta, psi)
            value = self.moment(p) / moment_prefactor(float(a), theta, psi)
            with np.errstate(divide="ignore"):
                out[k] = np.log(value) if value != 0 else -np.inf + 0j
        return out

    def log_noise_floor(self, alphas, theta, psi):
        out = np.empty(np.atleast_1d(alphas).shape)
        for k, a in enumerate(np.atleast_1d(alphas)):
            p = ProbeParams(float(a), theta, psi)
            total = 0.0
            for box, c in self.field.terms:
                pts, w = box_rule(box, alpha=p.alpha, order=self.order)
                total += abs(c) * float(np.sum(np.abs(w)
                                               * np.abs(probe_eval_many(p, pts))))
            pref = abs(moment_prefactor(float(a), theta, psi))
            out[k] = np.log(max(total * 1e-15 / pref, 1e-300))
        return out


class BoundaryMomentSource(MomentSource):
    """Source evaluating moments from boundary Cauchy data."""

    tag = "boundary"

    def __init__(self, trace):
        self.trace = trace
        self.dim = trace.points.shape[1]
        self.domain = trace.gamma

    @property
    def max_alpha(self) -> float:
        return _linear_space_alpha_cap(self.domain)

    def moment(self, p: ProbeParams) -> complex:
        return moment_boundary(self.trace, p)

    def log_weighted_sum(self, alphas, theta, psi):
        out = np.empty(np.atleast_1d(alphas).shape, dtype=complex)
        for k, a in enumerate(np.atleast_1d(alphas)):
            p = ProbeParams(float(a), theta, psi)
            value = self.moment(p) / moment_prefactor(float(a), theta, psi)
            with np.errstate(divide="ignore"):
                out[k] = np.log(value) if value != 0 else -np.inf + 0j
        return out

    def log_noise_floor(self, alphas, theta, psi):
        trace = self.trace
        out = np.empty(np.atleast_1d(alphas).shape)
        for k, a in enumerate(np.atleast_1d(alphas)):
            p = ProbeParams(float(a), theta, psi)
            e_abs = np.abs(probe_eval_many(p, trace.points))
            dn_abs = abs(p.alpha) * np.abs(trace.normals @ (theta + 1j * psi)) \
                * e_abs
            total = float(np.sum(trace.weights
                                 * (e_abs * np.abs(trace.phi2)
                                    + dn_abs * np.abs(trace.phi1))))
            pref = abs(moment_prefactor(float(a), theta, psi))
            out[k] = np.log(max(total * 1e-15 / pref, 1e-300))
        return out


class CurlMomentSource(MomentSource):
    """Oracle source pairing vector masses with a curl test family."""

    tag = "analytic"

    def __init__(self, pm: PointMassField, kind: str, domain: Box):
        if not pm.is_vector or pm.dim != 3:
            raise ValueError("curl sources require 3-D vector masses")
        if kind not in _CURL_PAIRS:
            raise ValueError(f"unknown curl kind {kind!r}")
        self.pm = pm
        self.kind = kind
        self.dim = 3
        self.domain = domain
        self.admissible_extra = _CURL_EXTRA[kind]

    def _prefactor(self, alpha, theta, psi) -> complex:
        kappa = theta + 1j * psi
        if np.any(np.abs(kappa) <= ADMISSIBLE_TOL):
            raise NotAdmissible("pair is orthogonal to a coordinate axis")
        return alpha ** (1 - self.dim) / np.prod(kappa)

    def log_weighted_sum(self, alphas, theta, psi):
        if _extra_condition_margin(theta, psi, self.admissible_extra) <= ADMISSIBLE_TOL:
            raise ConditionViolated(
                f"determinant condition for {self.kind} fails for this pair")
        weights = curl_weights(self.pm.masses, theta, psi, self.kind)
        return log_node_sum(self.pm.points, weights,
                            np.asarray(alphas, dtype=float), theta, psi)

    def subtract(self, correction: PointMassField,
                 drop_tol: float | None = None) -> "CurlMomentSource":
        merged = point_mass_field(
            3,
            np.vstack([self.pm.points, correction.points]),
            np.concatenate([self.pm.masses, -correction.masses]),
            **({} if drop_tol is None else {"drop_tol": drop_tol}))
        return CurlMomentSource(merged, self.kind, self.domain)


class CorrectedMomentSource(MomentSource):
    """A source minus the analytic contribution of recovered masses."""

    def __init__(self, base: MomentSource, correction: PointMassField):
        self.base = base
        self.correction = correction
        self.dim = base.dim
        self.domain = base.domain
        self.admissible_extra = base.admissible_extra
        self.tag = base.tag

    @property
    def max_alpha(self) -> float | None:
        return self.base.max_alpha

    def log_weighted_sum(self, alphas, theta, psi):
        a = self.base.log_weighted_sum(alphas, theta, psi)
        b = log_node_sum(self.correction.points, self.correction.masses,
                         np.asarray(alphas, dtype=float), theta, psi)
        out = np.empty_like(a)
        for k in range(out.shape[0]):
            out[k] = _log_diff(a[k], b[k])
        return out

    def log_noise_floor(self, alphas, theta, psi):
        return self.base.log_noise_floor(alphas, theta, psi)


def _log_diff(la: complex, lb: complex) -> complex:
    """log(exp(la) - exp(lb)), stable for widely different magnitudes."""
    if lb.real == -np.inf:
        return la
    if la.real == -np.inf:
        return lb + 1j * np.pi
    with np.errstate(divide="ignore"):
        if la.real >= lb.real:
            rest = 1.0 - np.exp(lb - la)
            return complex(-np.inf) if rest == 0 else la + np.log(rest)
        rest = np.exp(la - lb) - 1.0
        return complex(-np.inf) if rest == 0 else lb + np.log(rest)


def subtract_masses(source: MomentSource, correction: PointMassField,
                    drop_tol: float | None = None) -> MomentSource:
    """Remove recovered masses from a source, exactly when analytic.

    drop_tol discards node residues left by finite-precision vertex
    values; without it they accumulate and distort later support scans.
    """
    if correction.size == 0:
        return source
    if isinstance(source, (AnalyticMomentSource, CurlMomentSource)):
        return source.subtract(correction, drop_tol=drop_tol)
    if isinstance(source, CorrectedMomentSource):
        merged = point_mass_field(
            source.dim,
            np.vstack([source.correction.points, correction.points]),
            np.concatenate([source.correction.masses, correction.masses]),
            drop_tol=0.0)
        return CorrectedMomentSource(source.base, merged)
    return CorrectedMomentSource(source, correction)


# ---------------------------------------------------------------------------
# Probe tables


def write_probe_csv(path, rows, dim: int) -> None:
    """Rows of (alpha, theta, psi, complex value, tag) to CSV."""
    header = (["alpha"]
              + [f"theta_{l + 1}" for l in range(dim)]
              + [f"psi_{l + 1}" for l in range(dim)]
              + ["re", "im", "source"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for alpha, theta, psi, value, tag in rows:
            writer.writerow([repr(float(alpha))]
                            + [repr(float(t)) for t in theta]
                            + [repr(float(s)) for s in psi]
                            + [repr(value.real), repr(value.imag), tag])


def probe_table_rows(source: MomentSource, alphas, thetas):
    """Moment table over an (alpha, theta) grid with auto-chosen psi."""
    rows = []
    for theta in thetas:
        psi = make_admissible_pair(theta, extra=source.admissible_extra)
        for alpha in alphas:
            p = ProbeParams(float(alpha), theta, psi)
            rows.append((float(alpha), theta, psi, source.moment(p), source.tag))
    return rows
