from collections.abc import Sequence

from pydantic import TypeAdapter

from gencol_mmot.measures import Configuration, Marginal, check_configuration, shape_of
from gencol_mmot.types import CostSpec

from .base import CostEvaluator, CostFunction
from .barycenter import Barycenter, barycenter_map, eval_barycenter_cost
from .custom import Custom
from .quadratic import Quadratic2M, eval_quadratic_cost
from .spline import (
    SplineApprox,
    SplineExact,
    SplineMoments,
    eval_spline_cost_approx,
    eval_spline_cost_exact,
    spline_moments,
    spline_positions,
    thomas_solve,
)

COST_REGISTRY = {
    "quadratic": Quadratic2M,
    "barycenter": Barycenter,
    "spline_exact": SplineExact,
    "spline_approx": SplineApprox,
    "custom": Custom,
}

_SPEC_ADAPTER = TypeAdapter(CostSpec)


def get_cost(spec: CostSpec | str, **params) -> CostFunction:
    """Build a cost from a spec model, or from a kind name plus spec fields."""
    if isinstance(spec, str):
        if spec not in COST_REGISTRY:
            raise ValueError(f"Unknown cost kind: {spec}. Available: {list(COST_REGISTRY.keys())}")
        spec = _SPEC_ADAPTER.validate_python({"kind": spec, **params})
    return COST_REGISTRY[spec.kind].from_spec(spec)


def eval_cost(spec: CostSpec, config: Configuration, marginals: Sequence[Marginal]) -> float:
    check_configuration(tuple(config), shape_of(marginals))
    return CostEvaluator(get_cost(spec), marginals)(config)


__all__ = [
    "CostFunction",
    "CostEvaluator",
    "Quadratic2M",
    "Barycenter",
    "SplineExact",
    "SplineApprox",
    "SplineMoments",
    "Custom",
    "COST_REGISTRY",
    "get_cost",
    "eval_cost",
    "eval_quadratic_cost",
    "eval_barycenter_cost",
    "barycenter_map",
    "spline_moments",
    "spline_positions",
    "thomas_solve",
    "eval_spline_cost_exact",
    "eval_spline_cost_approx",
]
