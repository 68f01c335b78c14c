"""Numerical structure-equation calculus for Finsler metrics on the 2-sphere.

The engine builds the canonical coframe of a Finsler surface, extracts the
scalar invariants (Cartan scalar, Landsberg scalar, flag curvature),
integrates the geodesic flow across a two-chart stereographic atlas, and
verifies the global consequences of unit flag curvature on concrete
metrics: refocusing at distance pi, the quasi-antipodal map and its fixed
points, angle measures and geodesic polar coordinates, reversibility
classification, and the induced structures on the space of geodesics.
"""

from .charts import (
    Chart,
    ChartPoint,
    SigmaPoint,
    TangentVec,
    chordal_distance,
    sigma_distance,
    transition,
    transition_point,
    transition_sigma,
)
from .coframe import (
    BianchiCoefficients,
    Coframe,
    CoframeEngine,
    Frame,
    Invariants,
    hilbert_form,
    spray,
    spray_duality,
    structure_grid,
)
from .errors import (
    ChartEscape,
    ConfigParseError,
    FinslerError,
    FixedPointCountMismatch,
    InconsistentStructure,
    IntegratorFailure,
    MetricValidationError,
    MissingSeries,
    NonOrientedFiber,
    NonPositiveNorm,
    NotConstantCurvature,
    NotGeodesicallyReversible,
    NotPeriodic,
    NotStronglyConvex,
    OriginNotInOverlap,
    RefocusingFailure,
    SingularSystem,
    WindTooStrong,
    ZeroVector,
)
from .flow import (
    FlowBatch,
    GeodesicPath,
    conservation_check,
    conservation_many,
    flow,
    flow_differential,
    flow_many,
    geodesic_path,
    pullback_rotation_check,
    pullback_rotation_many,
)
from .global_maps import (
    Alpha2Classification,
    AngleMeasure,
    AntipodalReport,
    FixedPointReport,
    alpha,
    alpha2_classify,
    angle_measure,
    exp_polar,
    fibonacci_points,
    invariant_inner_product,
    is_geodesically_reversible,
    is_reversible,
    polar_grid_report,
    polar_jacobian_check,
)
from .lambda_space import (
    OrientedGeodesic,
    beta,
    beta_involution_check,
    free_action_check,
    g_invariance,
    orbit_distance,
    require_periodic,
    rho_curvature,
    rho_invariance,
    rho_value,
    x3_orbit_closure,
)
from .metrics import (
    FinslerMetric,
    Jet,
    NavigationMetric,
    RandersMetric,
    RoundMetric,
    ZermeloMetric,
    chart_independence_gap,
    eval_F,
    fundamental_tensor,
    indicatrix_param,
    load_metric_config,
    resolve_metric,
    zermelo_to_randers,
)
from .suite import DEFAULT_TOLERANCES, ExperimentConfig, run_suite

__version__ = "0.1.0"
