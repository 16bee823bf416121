"""Core value types: marginals, configurations, sparse plans, potentials and
the reduced configuration set."""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from gencol_mmot.errors import (
    DuplicateColumnError,
    MarginalValidationError,
    ShapeMismatchError,
)

if TYPE_CHECKING:
    from gencol_mmot.costs.base import CostEvaluator

Configuration = tuple[int, ...]

MASS_SUM_EXACT = 1e-12
MASS_SUM_RENORMALIZE = 1e-6
FEASIBILITY_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Marginal:
    """Discrete probability measure: ``points`` is (ℓ, d), ``masses`` is (ℓ,)."""

    points: np.ndarray
    masses: np.ndarray
    label: str | None = None

    def __post_init__(self):
        try:
            points = np.array(self.points, dtype=np.float64)
        except ValueError as exc:
            raise ShapeMismatchError(f"support points must share one dimension: {exc}") from exc
        masses = np.array(self.masses, dtype=np.float64).reshape(-1)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2:
            raise ShapeMismatchError(f"points must be (ℓ, d), got shape {points.shape}")
        if points.shape[0] != masses.shape[0]:
            raise ShapeMismatchError(
                f"{points.shape[0]} support points but {masses.shape[0]} masses"
            )
        object.__setattr__(self, "points", _readonly(points))
        object.__setattr__(self, "masses", _readonly(masses))

    @property
    def size(self) -> int:
        return int(self.masses.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @classmethod
    def create(cls, points, masses, label: str | None = None, renormalize: bool = True) -> Marginal:
        """Build and validate; raises MarginalValidationError on violations."""
        report = validate_marginal(cls(points, masses, label), renormalize=renormalize)
        if not report.passed:
            raise MarginalValidationError(report)
        return report.marginal

    @classmethod
    def dirac(cls, point, label: str | None = None) -> Marginal:
        return cls(np.atleast_1d(np.asarray(point, dtype=np.float64)).reshape(1, -1), [1.0], label)


@dataclass
class MarginalIssue:
    level: str  # "error" or "warning"
    code: str
    message: str
    location: str = ""

    def __str__(self) -> str:
        loc = f" at {self.location}" if self.location else ""
        return f"[{self.level.upper()}] {self.code}: {self.message}{loc}"


@dataclass
class MarginalReport:
    label: str | None
    issues: list[MarginalIssue] = field(default_factory=list)
    marginal: Marginal | None = None

    @property
    def passed(self) -> bool:
        return not any(i.level == "error" for i in self.issues)

    @property
    def offending_index(self) -> int | None:
        for issue in self.issues:
            if issue.level == "error" and issue.location.startswith("masses["):
                return int(issue.location[len("masses["):-1])
        return None

    def summary(self) -> str:
        name = self.label or "marginal"
        if not self.issues:
            return f"{name}: ok"
        return f"{name}: " + "; ".join(str(i) for i in self.issues)


def validate_marginal(m: Marginal, renormalize: bool = True) -> MarginalReport:
    """Check the Marginal invariants.

    Mass sums within 1e-12 of one are accepted as they are; sums within 1e-6
    are renormalized (reported as W001) when ``renormalize`` is set; larger
    deviations and nonpositive masses are errors naming the offending entry.
    """
    report = MarginalReport(label=m.label)

    if m.size == 0:
        report.issues.append(MarginalIssue("error", "M001", "empty measure"))
        return report

    if not np.all(np.isfinite(m.points)):
        bad = int(np.argwhere(~np.isfinite(m.points))[0][0])
        report.issues.append(
            MarginalIssue("error", "M002", "support point is not finite", f"points[{bad}]")
        )

    nonpositive = np.flatnonzero(~(m.masses > 0))
    if nonpositive.size:
        idx = int(nonpositive[0])
        report.issues.append(
            MarginalIssue(
                "error",
                "M003",
                f"mass must be positive, got {m.masses[idx]!r}",
                f"masses[{idx}]",
            )
        )
        return report

    total = math.fsum(m.masses.tolist())
    deviation = abs(total - 1.0)
    if deviation <= MASS_SUM_EXACT:
        report.marginal = m if report.passed else None
        return report

    if deviation <= MASS_SUM_RENORMALIZE and renormalize:
        report.issues.append(
            MarginalIssue("warning", "W001", f"masses summed to {total!r}; renormalized")
        )
        if report.passed:
            report.marginal = Marginal(m.points, m.masses / total, m.label)
        return report

    report.issues.append(
        MarginalIssue(
            "error",
            "M004",
            f"masses sum to {total!r}, deviation {deviation:.3e} exceeds {MASS_SUM_RENORMALIZE:g}",
            f"masses[{m.size - 1}]",
        )
    )
    return report


def shape_of(marginals: Sequence[Marginal]) -> tuple[int, ...]:
    return tuple(m.size for m in marginals)


def total_support(shape: Sequence[int]) -> int:
    return int(sum(shape))


def sparsity_bound(shape: Sequence[int]) -> int:
    """Σ(ℓ_k − 1) + 1, the support size of a basic optimal plan."""
    return int(sum(ell - 1 for ell in shape) + 1)


def product_size(shape: Sequence[int]) -> int:
    return math.prod(shape)


def check_configuration(r: Configuration, shape: Sequence[int]) -> None:
    if len(r) != len(shape):
        raise ShapeMismatchError(f"configuration {r} has {len(r)} entries, expected {len(shape)}")
    for k, (i, ell) in enumerate(zip(r, shape)):
        if not 0 <= i < ell:
            raise ShapeMismatchError(f"configuration {r}: index {i} out of range for marginal {k} (ℓ={ell})")


@dataclass(frozen=True, eq=False)
class SparsePlan:
    """Map from configurations to positive masses; zeros are never stored."""

    entries: Mapping[Configuration, float]
    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        entries: dict[Configuration, float] = {}
        for r, mass in self.entries.items():
            r = tuple(int(i) for i in r)
            check_configuration(r, shape)
            if not mass > 0:
                raise ValueError(f"plan mass at {r} must be positive, got {mass!r}")
            entries[r] = float(mass)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "entries", dict(sorted(entries.items())))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Configuration]:
        return iter(self.entries)

    @property
    def n_marginals(self) -> int:
        return len(self.shape)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.entries.values())

    def configurations(self) -> np.ndarray:
        """(n, N) int array in lexicographic order."""
        if not self.entries:
            return np.zeros((0, self.n_marginals), dtype=np.int64)
        return np.array(list(self.entries), dtype=np.int64)

    def masses(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=np.float64, count=len(self.entries))

    def cost(self, evaluator: CostEvaluator) -> float:
        if not self.entries:
            return 0.0
        values = evaluator.many(self.configurations())
        return math.fsum((values * self.masses()).tolist())


def support(plan: SparsePlan) -> set[Configuration]:
    return {r for r, mass in plan.entries.items() if mass > 0}


def marginal_residuals(plan: SparsePlan, marginals: Sequence[Marginal]) -> list[np.ndarray]:
    """M_k γ − μ_k for every k, summed exactly with ``math.fsum``."""
    if plan.shape != shape_of(marginals):
        raise ShapeMismatchError(f"plan shape {plan.shape} does not match marginals {shape_of(marginals)}")
    buckets = [[[] for _ in range(ell)] for ell in plan.shape]
    for r, mass in plan.entries.items():
        for k, i in enumerate(r):
            buckets[k][i].append(mass)
    residuals = []
    for k, m in enumerate(marginals):
        residuals.append(
            np.array(
                [math.fsum(buckets[k][i] + [-float(m.masses[i])]) for i in range(m.size)],
                dtype=np.float64,
            )
        )
    return residuals


def max_residual(plan: SparsePlan, marginals: Sequence[Marginal]) -> float:
    return max(float(np.max(np.abs(r))) for r in marginal_residuals(plan, marginals))


def is_feasible(plan: SparsePlan, marginals: Sequence[Marginal], tol: float = FEASIBILITY_TOL) -> bool:
    return max_residual(plan, marginals) <= tol


@dataclass(frozen=True, eq=False)
class DualPotentials:
    """Kantorovich potentials u_1..u_N, one value per support point."""

    u: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "u", tuple(_readonly(np.array(v, dtype=np.float64).reshape(-1)) for v in self.u)
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(v.shape[0] for v in self.u)

    def value(self, r: Configuration) -> float:
        return float(sum(self.u[k][i] for k, i in enumerate(r)))

    def values(self, configs: np.ndarray) -> np.ndarray:
        """Σ_k u_k(r_k) for each row of an (n, N) index array."""
        total = np.zeros(configs.shape[0], dtype=np.float64)
        for k, v in enumerate(self.u):
            total += v[configs[:, k]]
        return total

    def dual_objective(self, marginals: Sequence[Marginal]) -> float:
        return math.fsum(float(np.dot(m.masses, v)) for m, v in zip(marginals, self.u))


class ReducedSet:
    """Working configuration set Ω with insertion ages for tail-clearing.

    Ages come from a monotone counter and are never reset, so iteration
    order is insertion order. Single writer.
    """

    def __init__(self, capacity: int, members: Iterable[Configuration] = ()):
        self.capacity = int(capacity)
        self._age: dict[Configuration, int] = {}
        self._counter = 0
        for r in members:
            self.add(r)

    def __len__(self) -> int:
        return len(self._age)

    def __contains__(self, r: object) -> bool:
        return r in self._age

    def __iter__(self) -> Iterator[Configuration]:
        return iter(self._age)

    def add(self, r: Configuration) -> int:
        r = tuple(int(i) for i in r)
        if r in self._age:
            raise DuplicateColumnError(f"configuration {r} is already in the reduced set")
        age = self._counter
        self._age[r] = age
        self._counter += 1
        return age

    def age(self, r: Configuration) -> int:
        return self._age[r]

    def remove(self, rs: Iterable[Configuration]) -> None:
        for r in rs:
            del self._age[r]

    def oldest(self, count: int, exclude: set[Configuration]) -> list[Configuration]:
        """The ``count`` oldest members not in ``exclude``."""
        out = []
        for r in self._age:
            if len(out) >= count:
                break
            if r not in exclude:
                out.append(r)
        return out

    @property
    def over_capacity(self) -> bool:
        return len(self._age) > self.capacity

    def copy(self) -> ReducedSet:
        clone = ReducedSet(self.capacity)
        clone._age = dict(self._age)
        clone._counter = self._counter
        return clone
