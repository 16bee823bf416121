import math
from typing import Annotated, Any, Callable, Literal, Union

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Tolerances(BaseModel):
    """Numerical tolerances shared by the reduced LP solver and the engine."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    feasibility: float = Field(default=1e-9, gt=0)
    optimality: float = Field(default=1e-9, gt=0)
    zero_pivot: float = Field(default=1e-11, gt=0)
    drift: float = Field(default=1e-7, gt=0)
    plan_zero: float = Field(default=1e-13, ge=0)
    refactor_every: int = Field(default=100, ge=1)
    bland_after: int = Field(default=50, ge=1)
    max_pivots: int | None = Field(default=None, ge=1)


class GenColConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    beta: float = Field(default=3.0, gt=1.0)
    max_stall: int | None = Field(default=None, ge=1)
    seed: int = 0
    locality_radius: int | None = Field(default=None, ge=1)
    resolve_policy: Literal["each-accept", "batch"] = "each-accept"
    batch_size: int = Field(default=1, ge=1)
    parent_sampling: Literal["uniform", "mass"] = "uniform"
    acceptance_tol: float = Field(default=1e-10, ge=0)
    max_iterations: int | None = Field(default=None, ge=1)
    cache_factor: int = Field(default=4, ge=0)
    # At stall, products up to this size are scanned for violated constraints; 0 disables.
    stall_scan_limit: int = Field(default=1_000_000, ge=0)
    tolerances: Tolerances = Field(default_factory=Tolerances)

    @model_validator(mode="after")
    def _check_batch(self) -> Self:
        if self.resolve_policy == "each-accept" and self.batch_size != 1:
            raise ValueError("batch_size only applies to resolve_policy='batch'")
        return self

    def stall_limit(self, total_support: int) -> int:
        return self.max_stall if self.max_stall is not None else 10 * total_support

    def capacity(self, total_support: int) -> int:
        return int(math.floor(self.beta * total_support))


class QuadraticSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["quadratic"] = "quadratic"


class BarycenterSpec(BaseModel):
    """Mean squared deviation from the weighted Euclidean mean.

    Zero weights are allowed (at least one weight must be positive), so the
    degenerate sweep endpoints (1, 0, ..., 0) stay expressible.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["barycenter"] = "barycenter"
    weights: tuple[float, ...]

    @model_validator(mode="after")
    def _check_weights(self) -> Self:
        if len(self.weights) < 2:
            raise ValueError("barycenter cost needs at least 2 weights")
        if any(w < 0 for w in self.weights):
            raise ValueError(f"weights must be nonnegative, got {self.weights}")
        if not any(w > 0 for w in self.weights):
            raise ValueError("at least one weight must be positive")
        if abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {math.fsum(self.weights)!r}")
        return self


def _check_times(times: tuple[float, ...]) -> None:
    if len(times) < 3:
        raise ValueError("a nontrivial spline needs at least 3 knot times")
    if times[0] != 0.0 or times[-1] != 1.0:
        raise ValueError(f"knot times must start at 0 and end at 1, got {times[0]}..{times[-1]}")
    for a, b in zip(times, times[1:]):
        if not b > a:
            raise ValueError(f"knot times must be strictly increasing, got {a} then {b}")


class SplineExactSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["spline_exact"] = "spline_exact"
    times: tuple[float, ...]

    @model_validator(mode="after")
    def _check(self) -> Self:
        _check_times(self.times)
        return self


class SplineApproxSpec(BaseModel):
    """Second-difference spline energy; give either ``step`` or equidistant ``times``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["spline_approx"] = "spline_approx"
    step: float | None = Field(default=None, gt=0)
    times: tuple[float, ...] | None = None

    @model_validator(mode="after")
    def _check(self) -> Self:
        if (self.step is None) == (self.times is None):
            raise ValueError("specify exactly one of 'step' and 'times'")
        if self.times is not None:
            _check_times(self.times)
            gaps = [b - a for a, b in zip(self.times, self.times[1:])]
            if max(gaps) - min(gaps) > 1e-12:
                raise ValueError("approximate spline cost needs equidistant times")
        return self

    def tau(self, n_marginals: int) -> float:
        if self.step is not None:
            return self.step
        return 1.0 / (n_marginals - 1)


class CustomSpec(BaseModel):
    """User cost. The callback receives the (N, d) coordinate array, or the
    index tuple when ``by_index`` is set."""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    kind: Literal["custom"] = "custom"
    callback: Callable[[Any], float]
    by_index: bool = False
    name: str = "custom"


CostSpec = Annotated[
    Union[QuadraticSpec, BarycenterSpec, SplineExactSpec, SplineApproxSpec, CustomSpec],
    Field(discriminator="kind"),
]


class SinkhornParams(BaseModel):
    """With ``epsilon_scaling`` the regularization decays geometrically from
    ``epsilon_start`` to ``epsilon``, each stage (at most ``stage_iter``
    iterations) warm-starting the next."""

    model_config = ConfigDict(extra="forbid")

    epsilon: float = Field(gt=0)
    max_iter: int = Field(default=100_000, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    log_domain: bool = True
    scale_by_diameter: bool = True
    check_every: int = Field(default=1, ge=1)
    epsilon_scaling: bool = False
    epsilon_start: float = Field(default=1.0, gt=0)
    stage_iter: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _check_scaling(self) -> Self:
        if self.epsilon_scaling and self.epsilon_start <= self.epsilon:
            raise ValueError(f"epsilon_start ({self.epsilon_start}) must exceed epsilon ({self.epsilon})")
        if self.epsilon_scaling and not self.log_domain:
            raise ValueError("epsilon_scaling needs log_domain=True")
        return self


class RunRecord(BaseModel):
    """Everything needed to rerun a CLI invocation and compare its outputs."""

    model_config = ConfigDict(extra="forbid")

    command: str
    arguments: dict[str, Any] = Field(default_factory=dict)
    config: dict[str, Any] = Field(default_factory=dict)
    cost_history: list[tuple[int, float]] = Field(default_factory=list)
    final_objective: float | None = None
    support_size: int | None = None
    peak_omega: int | None = None
    iterations: int = 0
    accepted: int = 0
    rejected: int = 0
    scans: int = 0
    wall_clock_s: float = 0.0
    certificate: dict[str, Any] | None = None
    started_at: str = ""
    extra: dict[str, Any] = Field(default_factory=dict)
