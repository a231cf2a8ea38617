"""Radial-layer fields invisible to harmonic and Navier-kernel probes.

Two disjoint spherical layers A, B furnish the scalar example
Vol(B) on A minus Vol(A) on B: by the mean value theorem its pairing
with every harmonic function vanishes.  For displacement kernels the
components are biharmonic, so the ball average picks up a second term
with the Laplacian weight r^(n+2) / (2 (n + 2)); matching both the r^n
and r^(n+2) moments across three layers gives the vector example.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import BadRadii, SingularSystem
from .probes import ProbeParams, probe_eval_many
from .quadrature import annulus_rule, ball_rule, unit_ball_volume
from .validation import as_points, as_vector


@dataclass(frozen=True)
class RadialLayerField:
    """Piecewise-constant radial field on concentric spherical layers.

    Layer i is {radii[i] <= |x| < radii[i+1]} with value values[i]; in
    the vector case every component takes the same radial profile.
    """

    dim: int
    radii: tuple[float, ...]
    values: tuple[float, ...]
    is_vector: bool = False

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        values = tuple(float(v) for v in self.values)
        if len(radii) != len(values) + 1:
            raise BadRadii("need exactly one more radius than layer values")
        if radii[0] < 0 or any(a >= b for a, b in zip(radii, radii[1:])):
            raise BadRadii(f"radii must be strictly increasing and >= 0: {radii}")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "values", values)

    @property
    def n_layers(self) -> int:
        return len(self.values)

    @property
    def outer_radius(self) -> float:
        return self.radii[-1]

    def layer_volumes(self) -> np.ndarray:
        omega = unit_ball_volume(self.dim)
        r = np.asarray(self.radii)
        return omega * (r[1:] ** self.dim - r[:-1] ** self.dim)

    def value_at_radius(self, r: float) -> float:
        for i in range(self.n_layers):
            if self.radii[i] <= r < self.radii[i + 1]:
                return self.values[i]
        return 0.0

    def norm_l2(self) -> float:
        vols = self.layer_volumes()
        total = float(np.sum(np.asarray(self.values) ** 2 * vols))
        if self.is_vector:
            total *= self.dim
        return np.sqrt(total)


def scalar_null_field(rA: float, rB: float, n: int) -> RadialLayerField:
    """Vol(B) on the inner ball, -Vol(A) on the outer layer."""
    if not 0 < rA < rB:
        raise BadRadii(f"need 0 < rA < rB, got {rA}, {rB}")
    omega = unit_ball_volume(n)
    vol_a = omega * rA ** n
    vol_b = omega * (rB ** n - rA ** n)
    return RadialLayerField(n, (0.0, rA, rB), (vol_b, -vol_a))


def vector_null_field(r1: float, r2: float, r3: float, n: int):
    """Weights (a, b) making (1, b, a) on three layers kernel-orthogonal.

    Solves  a (r3^p - r2^p) + b (r2^p - r1^p) + r1^p = 0  for p = n and
    p = n + 2; the determinant cannot vanish for 0 < r1 < r2 < r3.
    """
    if not 0 < r1 < r2 < r3:
        raise BadRadii(f"need 0 < r1 < r2 < r3, got {(r1, r2, r3)}")
    rows = []
    rhs = []
    for p in (n, n + 2):
        rows.append([r3 ** p - r2 ** p, r2 ** p - r1 ** p])
        rhs.append(-float(r1 ** p))
    A = np.asarray(rows)
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < 1e-12:
        raise SingularSystem("layer moment system is singular")
    a, b = np.linalg.solve(A, np.asarray(rhs))
    field = RadialLayerField(n, (0.0, r1, r2, r3), (1.0, float(b), float(a)),
                             is_vector=True)
    return float(a), float(b), field


def radial_moment_matrix(radii, n: int, vector: bool) -> np.ndarray:
    """Moment constraints a layer-value vector must annihilate."""
    r = np.asarray(radii, dtype=float)
    if r[0] < 0 or np.any(np.diff(r) <= 0):
        raise BadRadii(f"radii must be strictly increasing and >= 0: {radii}")
    powers = (n, n + 2) if vector else (n,)
    return np.asarray([r[1:] ** p - r[:-1] ** p for p in powers])


def radial_null_basis(radii, n: int, vector: bool = False):
    """Basis of layer fields orthogonal to the kernel on this partition."""
    from scipy.linalg import null_space

    M = radial_moment_matrix(radii, n, vector)
    basis = null_space(M)
    fields = []
    for k in range(basis.shape[1]):
        fields.append(RadialLayerField(n, tuple(radii),
                                       tuple(basis[:, k]), is_vector=vector))
    return fields


def mean_value_residual(f, lap_f, x, r: float, n: int,
                        n_radial: int = 64, n_angular: int = 128) -> float:
    """Deviation from the biharmonic ball mean-value identity.

    |integral over B(x, r) of f  -  omega_n r^n f(x)
     -  omega_n r^(n+2) / (2 (n+2)) lap_f(x)|
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    x = as_vector(x, n)
    pts, w = ball_rule(r, n, n_radial, n_angular)
    integral = float(np.sum(w * f(pts + x)))
    omega = unit_ball_volume(n)
    expected = omega * r ** n * float(f(x.reshape(1, -1))[0]) \
        + omega * r ** (n + 2) / (2.0 * (n + 2)) * float(lap_f(x.reshape(1, -1))[0])
    return abs(integral - expected)


# ---------------------------------------------------------------------------
# Kernel sample families


@dataclass(frozen=True)
class KernelSample:
    """Named test function with a vectorized point evaluator."""

    name: str
    evaluate: callable
    vector: bool = False


def _monomial_exponents(n: int, degree: int):
    return [e for e in itertools.product(range(degree + 1), repeat=n)
            if sum(e) == degree]


def _poly_evaluator(exps, coeffs):
    exps = np.asarray(exps)
    coeffs = np.asarray(coeffs)

    def evaluate(X):
        X = as_points(X)
        return np.sum(coeffs[None, :]
                      * np.prod(X[:, None, :] ** exps[None, :, :], axis=2),
                      axis=1)

    return evaluate


def _poly_gradient_evaluator(exps, coeffs, n: int):
    exps = np.asarray(exps)
    coeffs = np.asarray(coeffs)

    def evaluate(X):
        X = as_points(X, n)
        out = np.zeros((X.shape[0], n))
        for l in range(n):
            mask = exps[:, l] > 0
            if not np.any(mask):
                continue
            dexp = exps[mask].copy()
            dcoef = coeffs[mask] * dexp[:, l]
            dexp[:, l] -= 1
            out[:, l] = np.sum(dcoef[None, :]
                               * np.prod(X[:, None, :] ** dexp[None, :, :], axis=2),
                               axis=1)
        return out

    return evaluate


def harmonic_polynomial_basis(n: int, degree: int):
    """Coefficient bases (exps, coeffs) of harmonic homogeneous polynomials."""
    from scipy.linalg import null_space

    exps = _monomial_exponents(n, degree)
    if degree < 2:
        return [(exps, np.eye(len(exps))[k]) for k in range(len(exps))]
    lower = _monomial_exponents(n, degree - 2)
    index = {e: i for i, e in enumerate(lower)}
    L = np.zeros((len(lower), len(exps)))
    for j, e in enumerate(exps):
        for l in range(n):
            if e[l] >= 2:
                tgt = tuple(v - 2 if k == l else v for k, v in enumerate(e))
                L[index[tgt], j] += e[l] * (e[l] - 1)
    basis = null_space(L)
    return [(exps, basis[:, k]) for k in range(basis.shape[1])]


def _probe_samples(n: int, seeds) -> list[KernelSample]:
    out = []
    for alpha, ang in seeds:
        if n == 2:
            theta = np.array([np.cos(ang), np.sin(ang)])
        else:
            theta = np.array([np.cos(ang), np.sin(ang) * 0.8, np.sin(ang) * 0.6])
            theta = theta / np.linalg.norm(theta)
        from .probes import make_admissible_pair

        psi = make_admissible_pair(theta)
        p = ProbeParams(alpha, theta, psi)
        out.append(KernelSample(
            f"probe_re(a={alpha:g},t={ang:.2f})",
            lambda X, p=p: probe_eval_many(p, X).real))
        out.append(KernelSample(
            f"probe_im(a={alpha:g},t={ang:.2f})",
            lambda X, p=p: probe_eval_many(p, X).imag))
    return out


def kernel_samples(kind: str, n: int, budget: int = 12,
                   degree_cap: int = 6) -> list[KernelSample]:
    """Test functions in the harmonic or Navier kernel.

    harmonic: real/imaginary probe parts plus harmonic polynomials up to
    degree_cap.  navier: gradients of harmonic samples, curl-type probe
    fields (3-D), rotated gradients (2-D), constant and linear
    divergence-free fields; all are kernel elements for every Lame
    parameter.
    """
    samples: list[KernelSample] = []
    if kind == "harmonic":
        samples.extend(_probe_samples(n, [(0.7, 0.3), (1.3, 1.1), (2.0, 2.3),
                                          (0.9, 4.0), (1.7, 5.5)]))
        for degree in range(degree_cap + 1):
            for exps, coeffs in harmonic_polynomial_basis(n, degree):
                samples.append(KernelSample(
                    f"harmonic_poly(d={degree})",
                    _poly_evaluator(exps, coeffs)))
    elif kind == "navier":
        for l in range(n):
            e = np.zeros(n)
            e[l] = 1.0
            samples.append(KernelSample(
                f"constant_{l}",
                lambda X, e=e: np.tile(e, (as_points(X, n).shape[0], 1)),
                vector=True))
        # linear divergence-free: trace-free coefficient matrices
        mats = []
        M = np.zeros((n, n))
        M[0, 1] = 1.0
        mats.append(M)
        M = np.zeros((n, n))
        M[1, 0] = -1.0
        M[0, 1] = 1.0
        mats.append(M)
        M = np.diag([1.0, -1.0] + [0.0] * (n - 2))
        mats.append(M)
        for k, M in enumerate(mats):
            samples.append(KernelSample(
                f"linear_divfree_{k}",
                lambda X, M=M: as_points(X, n) @ M.T, vector=True))
        for degree in range(2, 5):
            for exps, coeffs in harmonic_polynomial_basis(n, degree):
                samples.append(KernelSample(
                    f"grad_harmonic(d={degree})",
                    _poly_gradient_evaluator(exps, coeffs, n), vector=True))
        if n == 2:
            for exps, coeffs in harmonic_polynomial_basis(2, 3):
                grad = _poly_gradient_evaluator(exps, coeffs, 2)
                samples.append(KernelSample(
                    "rotated_grad(d=3)",
                    lambda X, grad=grad: grad(X)[:, ::-1] * np.array([1.0, -1.0]),
                    vector=True))
        if n == 3:
            theta = np.array([0.6, 0.48, 0.64])
            theta = theta / np.linalg.norm(theta)
            from .probes import make_admissible_pair

            psi = make_admissible_pair(theta)
            p = ProbeParams(1.1, theta, psi)
            kappa = theta + 1j * psi

            def curl_x(X, p=p, kappa=kappa):
                e = probe_eval_many(p, X)
                out = np.zeros((X.shape[0], 3), dtype=complex)
                out[:, 1] = p.alpha * kappa[2] * e
                out[:, 2] = -p.alpha * kappa[1] * e
                return out

            samples.append(KernelSample(
                "curl_probe_re", lambda X: curl_x(X).real, vector=True))
            samples.append(KernelSample(
                "curl_probe_im", lambda X: curl_x(X).imag, vector=True))
    else:
        raise ValueError(f"unknown kernel kind {kind!r}")
    return samples[:budget] if budget < len(samples) else samples


def pair_with_layers(field: RadialLayerField, sample: KernelSample,
                     n_radial: int = 64, n_angular: int = 128) -> float:
    """L2 pairing of a radial layer field with a test function."""
    total = 0.0
    for i in range(field.n_layers):
        if field.values[i] == 0.0:
            continue
        pts, w = annulus_rule(field.radii[i], field.radii[i + 1], field.dim,
                              n_radial, n_angular)
        vals = sample.evaluate(pts)
        if field.is_vector != sample.vector:
            raise ValueError("field and sample must both be scalar or vector")
        if sample.vector:
            total += field.values[i] * float(np.sum(w * vals.sum(axis=1)))
        else:
            total += field.values[i] * float(np.sum(w * vals))
    return total


def sample_norm_on_support(field: RadialLayerField, sample: KernelSample,
                           n_radial: int = 64, n_angular: int = 128) -> float:
    pts, w = annulus_rule(field.radii[0], field.outer_radius, field.dim,
                          n_radial, n_angular)
    vals = sample.evaluate(pts)
    if sample.vector:
        sq = np.sum(vals ** 2, axis=1)
    else:
        sq = vals ** 2
    return float(np.sqrt(np.sum(w * sq)))


def orthogonality_report(field: RadialLayerField, tests,
                         n_radial: int = 64, n_angular: int = 128) -> dict:
    """Normalized pairings of a layer field against kernel samples."""
    entries = []
    worst = 0.0
    fnorm = field.norm_l2()
    for sample in tests:
        raw = pair_with_layers(field, sample, n_radial, n_angular)
        snorm = sample_norm_on_support(field, sample, n_radial, n_angular)
        normalized = abs(raw) / max(fnorm * snorm, 1e-300)
        worst = max(worst, normalized)
        entries.append({"test": sample.name, "pairing": normalized})
    return {
        "field_norm": fnorm,
        "resolution": {"radial": n_radial, "angular": n_angular},
        "pairings": entries,
        "max_normalized_pairing": worst,
    }


def biharmonic_cases(n: int = 2):
    """(name, f, lap_f) triples satisfying the ball mean-value identity."""
    from .probes import make_admissible_pair

    cases = []
    for alpha, ang in ((0.8, 0.4), (1.4, 2.1), (0.6, 5.0)):
        if n == 2:
            theta = np.array([np.cos(ang), np.sin(ang)])
        else:
            theta = np.array([np.cos(ang), 0.8 * np.sin(ang), 0.6 * np.sin(ang)])
            theta = theta / np.linalg.norm(theta)
        psi = make_admissible_pair(theta)
        p = ProbeParams(alpha, theta, psi)
        cases.append((f"harmonic_probe(a={alpha:g})",
                      lambda X, p=p: probe_eval_many(p, X).real,
                      lambda X: np.zeros(as_points(X).shape[0])))

    cases.append(("|y|^2",
                  lambda X: np.sum(as_points(X, n) ** 2, axis=1),
                  lambda X: np.full(as_points(X, n).shape[0], 2.0 * n)))
    cases.append(("x1 |y|^2",
                  lambda X: as_points(X, n)[:, 0] * np.sum(as_points(X, n) ** 2, axis=1),
                  lambda X: (2.0 * n + 4.0) * as_points(X, n)[:, 0]))
    # |y|^2 h with h harmonic: lap = 2 n h + 4 (y, grad h)
    for deg in (2, 3):
        for exps, coeffs in harmonic_polynomial_basis(n, deg)[:2]:
            h = _poly_evaluator(exps, coeffs)
            gh = _poly_gradient_evaluator(exps, coeffs, n)
            cases.append((
                f"|y|^2 * harmonic(d={deg})",
                lambda X, h=h: np.sum(as_points(X, n) ** 2, axis=1) * h(X),
                lambda X, h=h, gh=gh: 2.0 * n * h(X)
                + 4.0 * np.sum(as_points(X, n) * gh(X), axis=1)))
    theta = np.zeros(n)
    theta[0] = 1.0
    psi = np.zeros(n)
    psi[1] = 1.0
    p = ProbeParams(1.0, theta, psi)
    cases.append(("|y|^2 * probe_re",
                  lambda X: np.sum(as_points(X, n) ** 2, axis=1)
                  * probe_eval_many(p, X).real,
                  lambda X: 2.0 * n * probe_eval_many(p, X).real
                  + 4.0 * np.sum(as_points(X, n)
                                 * (p.alpha * (p.theta + 1j * p.psi)[None, :]
                                    * probe_eval_many(p, X)[:, None]).real,
                                 axis=1)))
    return cases


def run_certification(n_radial: int = 64, n_angular: int = 128,
                      pairing_tol: float = 1e-6,
                      meanvalue_tol: float = 1e-8) -> dict:
    """Null-space checks: orthogonality, mean value, family dimensions."""
    checks = []

    def add(name, value, threshold, ok=None):
        passed = bool(value < threshold) if ok is None else bool(ok)
        checks.append({"name": name, "value": value,
                       "threshold": threshold, "pass": passed})

    scalar = scalar_null_field(1.0, 2.0, n=2)
    harm = kernel_samples("harmonic", 2, budget=40)
    rep = orthogonality_report(scalar, harm, n_radial, n_angular)
    add("scalar_null_orthogonal_harmonic", rep["max_normalized_pairing"],
        pairing_tol)

    a, b, vec = vector_null_field(1.0, 2.0, 3.0, n=2)
    add("vector_null_coefficients(1,2,3,n=2)",
        abs(a - 0.1) + abs(b + 0.5), 1e-12)
    nav = kernel_samples("navier", 2, budget=12)
    rep = orthogonality_report(vec, nav, n_radial, n_angular)
    add("vector_null_orthogonal_navier", rep["max_normalized_pairing"],
        pairing_tol)

    worst = 0.0
    pts = {2: np.array([0.3, -0.2]), 3: np.array([0.2, -0.1, 0.3])}
    for name, f, lap in biharmonic_cases(2)[:10]:
        for r in (0.7, 1.2):
            worst = max(worst, mean_value_residual(f, lap, pts[2], r, 2,
                                                   n_radial, n_angular))
    add("mean_value_residual_biharmonic", worst, meanvalue_tol)

    for k in (3, 4):
        radii = np.linspace(1.0, 2.5, k + 1)
        basis = radial_null_basis(radii, n=2, vector=False)
        ranks_ok = len(basis) == k - 1
        worst_pair = max(
            orthogonality_report(f, harm[:8], n_radial // 2, n_angular // 2)
            ["max_normalized_pairing"] for f in basis)
        add(f"scalar_family_dimension(k={k})", float(len(basis)),
            k - 1 + 0.5, ok=ranks_ok and worst_pair < pairing_tol)
        vbasis = radial_null_basis(radii, n=2, vector=True)
        vworst = max(
            orthogonality_report(f, nav[:6], n_radial // 2, n_angular // 2)
            ["max_normalized_pairing"] for f in vbasis)
        add(f"vector_family_dimension(k={k})", float(len(vbasis)),
            k - 2 + 0.5, ok=len(vbasis) == k - 2 and vworst < pairing_tol)

    return {"checks": checks, "all_pass": all(c["pass"] for c in checks)}
