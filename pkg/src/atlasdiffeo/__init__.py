"""Certified calculus on chart-based manifolds.

Load a manifold description (charts, metrics, transitions), estimate the
quantitative constants of its exponential and logarithm maps, build weighted
seminorms and saturated weight families, and certify near-identity maps as
diffeomorphisms with composable, invertible displacement fields.
"""

from .certs import Certificate, Clause, canonical_json, to_jsonable
from .engine import (
    ChartConstants,
    ConstantsReport,
    MetricField,
    QiftProblem,
    certify_qift,
    compute_constants,
    estimate_first_second_exp_bounds,
    estimate_grenz_exp,
    estimate_log_constants,
    estimate_quot_norm,
    estimate_rad_exp_fib_inv,
    geodesic_exp,
    riemannian_log,
)
from .errors import AtlasDiffeoError, InvariantViolation, SpecError
from .expr import Expr, evaluate, evaluate_at_points, format_expr, parse_expr
from .fields import (
    DerivedField,
    ExprField,
    GridField,
    GridTable,
    LocalizedField,
    field_from_spec,
    read_field,
    validate_localization,
    write_field,
)
from .group import (
    DiffeoRep,
    NeighborhoodGauge,
    apply_diffeo,
    certify_diffeo,
    compose,
    containing_charts,
    group_chart,
    invert,
)
from .norms import matrix_op_norm, op_norm, vector_norm
from .oracles import (
    OracleManifold,
    cylinder_oracle,
    flat_oracle,
    half_plane_oracle,
    localize_global_exprs,
    oracle_by_name,
    scaled_flat_oracle,
)
from .seminorms import (
    MembershipReport,
    SeminormResult,
    chart_change_transfer,
    intersect_atlas_seminorm,
    membership,
    seminorm,
    subordinate_restrict,
)
from .spec import (
    Chart,
    Domain,
    ManifoldSpec,
    Transition,
    load_manifold,
    load_manifold_from_dict,
    locally_finite_report,
    validate_adapted,
    validate_structure,
)
from .weights import (
    AdjustedWeight,
    BoundFamily,
    ExprWeight,
    GeneratedWeight,
    PairedOmega,
    ScaledWeight,
    Weight,
    construct_adjusted,
    estimate_bound_families,
    ext_mult,
    pair_omega_exp_log,
    saturate,
    weight_from_spec,
)

__version__ = "0.1.0"
