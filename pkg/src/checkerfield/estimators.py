"""Estimator-style front ends for the reconstruction pipelines.

fit consumes boundary Cauchy data (or an oracle field / mass map) and
stores the recovered source; predict evaluates the recovered source at
spatial points, so the estimators compose with standard tooling
(get_params / set_params / clone).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .fields import (
    Box,
    CheckeredField,
    PointMassField,
    VectorCheckeredField,
    discretize,
    discretize_vector,
    eval_field_many,
    eval_vector_field_many,
    reconstruct_field,
)
from .forward import BoundaryTrace
from .probes import AnalyticMomentSource, BoundaryMomentSource, MomentSource, VolumeMomentSource
from .reconstruction import (
    ReconstructionConfig,
    curl_sources,
    peel_vector,
    reconstruct_scalar_with_report,
)
from .validation import as_points


def _config_from_params(est, analytic: bool) -> ReconstructionConfig:
    base = ReconstructionConfig.oracle() if analytic else ReconstructionConfig()
    overrides = {}
    for name in ("alpha0", "ratio", "count", "directions", "window",
                 "tol_value", "tol_hull", "max_peel_rounds"):
        value = getattr(est, name)
        if value is not None:
            overrides[name] = value
    return ReconstructionConfig(**{**{
        "alpha0": base.alpha0, "ratio": base.ratio, "count": base.count,
        "directions": base.directions, "window": base.window,
        "tol_value": base.tol_value, "tol_hull": base.tol_hull,
        "max_peel_rounds": base.max_peel_rounds}, **overrides})


class ScalarSourceReconstructor(BaseEstimator):
    """Recover a scalar box source from moments of its potential.

    Parameters left at None fall back to grid defaults suited to the
    input kind: log-domain oracle grids for analytic inputs, moderate
    alphas for boundary traces.
    """

    def __init__(self, alpha0=None, ratio=None, count=None, directions=None,
                 window=None, tol_value=None, tol_hull=None,
                 max_peel_rounds=None, mode="auto"):
        self.alpha0 = alpha0
        self.ratio = ratio
        self.count = count
        self.directions = directions
        self.window = window
        self.tol_value = tol_value
        self.tol_hull = tol_hull
        self.max_peel_rounds = max_peel_rounds
        self.mode = mode

    def _as_source(self, X) -> MomentSource:
        if isinstance(X, MomentSource):
            return X
        if isinstance(X, BoundaryTrace):
            return BoundaryMomentSource(X)
        if isinstance(X, PointMassField):
            raise ValueError("pass (PointMassField, domain) via fit(X, domain=...)"
                             " or an AnalyticMomentSource")
        if isinstance(X, CheckeredField):
            if self.mode == "volume":
                return VolumeMomentSource(X)
            return AnalyticMomentSource(discretize(X), X.domain)
        raise TypeError(f"cannot build a moment source from {type(X).__name__}")

    def fit(self, X, y=None, domain: Box | None = None):
        """X: BoundaryTrace, CheckeredField, or a MomentSource."""
        if isinstance(X, PointMassField):
            if domain is None:
                raise ValueError("a domain box is required with mass input")
            source = AnalyticMomentSource(X, domain)
        else:
            source = self._as_source(X)
        cfg = _config_from_params(self, analytic=source.tag == "analytic")
        dom = domain or source.domain
        field, report = reconstruct_scalar_with_report(source, dom, cfg)
        self.source_tag_ = source.tag
        self.config_ = cfg
        self.domain_ = dom
        self.field_ = field
        self.masses_ = report.masses
        self.report_ = report
        self.n_features_in_ = source.dim
        return self

    def predict(self, X) -> np.ndarray:
        """Recovered source values at points X of shape (m, dim)."""
        check_is_fitted(self, "field_")
        X = as_points(X, self.n_features_in_)
        return eval_field_many(self.field_, X)


class VectorSourceReconstructor(BaseEstimator):
    """Recover a 3-D vector box source through the curl pairings (oracle)."""

    def __init__(self, alpha0=None, ratio=None, count=None, directions=None,
                 window=None, tol_value=None, tol_hull=None,
                 max_peel_rounds=None):
        self.alpha0 = alpha0
        self.ratio = ratio
        self.count = count
        self.directions = directions
        self.window = window
        self.tol_value = tol_value
        self.tol_hull = tol_hull
        self.max_peel_rounds = max_peel_rounds

    def fit(self, X, y=None, domain: Box | None = None):
        """X: VectorCheckeredField or a vector PointMassField (with domain)."""
        if isinstance(X, VectorCheckeredField):
            pm = discretize_vector(X)
            dom = domain or X.domain
        elif isinstance(X, PointMassField) and X.is_vector:
            if domain is None:
                raise ValueError("a domain box is required with mass input")
            pm, dom = X, domain
        else:
            raise TypeError("fit expects a VectorCheckeredField or vector masses")
        cfg = _config_from_params(self, analytic=True)
        sources = curl_sources(pm, dom)
        masses, report = peel_vector(sources, dom, cfg)
        if masses.size:
            scale = max(1.0, float(np.max(np.abs(masses.masses))))
            comps = tuple(
                reconstruct_field(masses.component(k), dom,
                                  drop_tol=cfg.tol_value / 2,
                                  check_tol=5.0 * cfg.tol_value * scale)
                for k in range(3))
        else:
            comps = tuple(CheckeredField(dom, ()) for _ in range(3))
        self.config_ = cfg
        self.domain_ = dom
        self.masses_ = masses
        self.report_ = report
        self.field_ = VectorCheckeredField(comps)
        self.n_features_in_ = 3
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "field_")
        X = as_points(X, 3)
        return eval_vector_field_many(self.field_, X)
