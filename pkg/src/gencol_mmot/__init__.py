from gencol_mmot.types import (
    BarycenterSpec,
    CostSpec,
    CustomSpec,
    GenColConfig,
    QuadraticSpec,
    RunRecord,
    SinkhornParams,
    SplineApproxSpec,
    SplineExactSpec,
    Tolerances,
)
from gencol_mmot.errors import (
    ActiveColumnError,
    DuplicateColumnError,
    GenColError,
    InfeasibleError,
    InputFormatError,
    InvariantError,
    IterationLimitError,
    MarginalValidationError,
    NumericalUnderflowError,
    ShapeMismatchError,
)
from gencol_mmot.measures import (
    Configuration,
    DualPotentials,
    Marginal,
    MarginalReport,
    ReducedSet,
    SparsePlan,
    marginal_residuals,
    sparsity_bound,
    support,
    validate_marginal,
)
from gencol_mmot.costs import (
    COST_REGISTRY,
    CostEvaluator,
    CostFunction,
    eval_cost,
    get_cost,
    spline_moments,
)
from gencol_mmot.lp import (
    BasisState,
    LpSolution,
    ReducedLP,
    dual_violation,
    solve_full_product,
)
from gencol_mmot.init import InitResult, augment_random, nw_corner, reflection_init
from gencol_mmot.engine import (
    Certificate,
    GenColState,
    ProgressRecord,
    certify,
    certify_potentials,
    escape_stall,
    propose_child,
    run,
    scan_violations,
    start,
    tail_clear,
)
from gencol_mmot.extract import (
    GridSpec,
    MeasurePath,
    WeightedPointCloud,
    barycenter_pushforward,
    rasterize,
    smooth_threshold,
    spline_path,
)
from gencol_mmot.baselines import ibp_barycenter, sinkhorn_2m

__all__ = [
    # Configuration
    "BarycenterSpec",
    "CostSpec",
    "CustomSpec",
    "GenColConfig",
    "QuadraticSpec",
    "RunRecord",
    "SinkhornParams",
    "SplineApproxSpec",
    "SplineExactSpec",
    "Tolerances",
    # Errors
    "ActiveColumnError",
    "DuplicateColumnError",
    "GenColError",
    "InfeasibleError",
    "InputFormatError",
    "InvariantError",
    "IterationLimitError",
    "MarginalValidationError",
    "NumericalUnderflowError",
    "ShapeMismatchError",
    # Measures
    "Configuration",
    "DualPotentials",
    "Marginal",
    "MarginalReport",
    "ReducedSet",
    "SparsePlan",
    "marginal_residuals",
    "sparsity_bound",
    "support",
    "validate_marginal",
    # Costs
    "COST_REGISTRY",
    "CostEvaluator",
    "CostFunction",
    "eval_cost",
    "get_cost",
    "spline_moments",
    # LP
    "BasisState",
    "LpSolution",
    "ReducedLP",
    "dual_violation",
    "solve_full_product",
    # GenCol
    "InitResult",
    "augment_random",
    "nw_corner",
    "reflection_init",
    "Certificate",
    "GenColState",
    "ProgressRecord",
    "certify",
    "certify_potentials",
    "escape_stall",
    "propose_child",
    "run",
    "scan_violations",
    "start",
    "tail_clear",
    # Outputs and baselines
    "GridSpec",
    "MeasurePath",
    "WeightedPointCloud",
    "barycenter_pushforward",
    "rasterize",
    "smooth_threshold",
    "spline_path",
    "ibp_barycenter",
    "sinkhorn_2m",
]
