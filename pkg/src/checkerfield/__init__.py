"""Piecewise-constant box source recovery from boundary Cauchy data."""

from .errors import (
    AllUnderflow,
    BadRadii,
    BoxTouchesBoundary,
    CheckerFieldError,
    ConditionViolated,
    DegenerateHull,
    InconsistentF3,
    MalformedTrace,
    NoAdmissiblePsi,
    NoSeparation,
    NotAdmissible,
    NotInImage,
    OnSingularEdge,
    Overflow,
    PeelStalled,
    PointOutsideDomain,
    SingularSystem,
)
from .fields import (
    Box,
    CheckeredField,
    NodeReport,
    PointMassField,
    VectorCheckeredField,
    classify_nodes,
    discretize,
    discretize_vector,
    eval_field,
    eval_field_many,
    eval_vector_field_many,
    field_from_json,
    field_to_json,
    point_mass_field,
    point_mass_allclose,
    random_checkered_field,
    reconstruct_field,
)
from .forward import (
    BoundaryTrace,
    add_noise,
    boundary_trace,
    potential,
    potential_gradient,
    trace_from_csv,
    trace_to_csv,
)
from .hull import Polytope
from .probes import (
    AnalyticMomentSource,
    BoundaryMomentSource,
    CurlMomentSource,
    MomentSource,
    ProbeParams,
    VolumeMomentSource,
    is_admissible,
    make_admissible_pair,
    moment_analytic,
    moment_boundary,
    moment_prefactor,
    moment_quadrature,
    probe,
    probe_eval,
    vector_moment_analytic,
)
from .reconstruction import (
    ReconstructionConfig,
    ReconstructionReport,
    curl_sources,
    peel,
    peel_with_report,
    recover_hull,
    reconstruct_scalar,
    reconstruct_scalar_with_report,
    reconstruct_vector,
    separating_direction,
    support_slope,
    vertex_value,
    vertex_values_vector,
)
from .nullspace import (
    RadialLayerField,
    kernel_samples,
    mean_value_residual,
    orthogonality_report,
    radial_null_basis,
    scalar_null_field,
    vector_null_field,
)
from .estimators import ScalarSourceReconstructor, VectorSourceReconstructor

__version__ = "0.1.0"
