from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Literal

import numpy as np

from gencol_mmot.errors import ActiveColumnError, DuplicateColumnError, ShapeMismatchError
from gencol_mmot.measures import (
    Configuration,
    DualPotentials,
    Marginal,
    SparsePlan,
    check_configuration,
    shape_of,
)
from gencol_mmot.types import Tolerances

if TYPE_CHECKING:
    from gencol_mmot.lp.simplex import FactorCache

LpStatus = Literal["optimal", "infeasible", "iteration-limit"]
BasisKey = Configuration | int  # an int names the artificial variable of that row


@dataclass(frozen=True)
class BasisState:
    """Warm-start descriptor: one key per reduced row, in basis position order."""

    keys: tuple[BasisKey, ...]

    @property
    def structural(self) -> set[Configuration]:
        return {k for k in self.keys if isinstance(k, tuple)}


@dataclass
class LpSolution:
    status: LpStatus
    plan: SparsePlan | None
    potentials: DualPotentials | None
    objective: float | None
    basis: BasisState | None
    pivots: int = 0
    phase1_pivots: int = 0
    refactorizations: int = 0
    warm_started: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def summary(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "objective": self.objective,
            "support_size": len(self.plan) if self.plan is not None else None,
            "pivots": self.pivots,
            "phase1_pivots": self.phase1_pivots,
            "refactorizations": self.refactorizations,
            "warm_started": self.warm_started,
        }


class ReducedLP:
    """The transport LP restricted to the columns in Ω.

    The last row of every marginal after the first is dropped, leaving
    Σ(ℓ_k − 1) + 1 linearly independent rows. A column stores its row
    indices in that reduced layout, with −1 for a dropped row.
    """

    def __init__(self, marginals: Sequence[Marginal], tolerances: Tolerances | None = None):
        if len(marginals) < 2:
            raise ShapeMismatchError(f"need at least 2 marginals, got {len(marginals)}")
        self.tolerances = tolerances or Tolerances()
        self.shape = shape_of(marginals)
        for m in marginals:
            if not np.all(m.masses > 0):
                raise ValueError(f"marginal {m.label or ''} has nonpositive masses")
            total = math.fsum(m.masses.tolist())
            if abs(total - 1.0) > self.tolerances.feasibility:
                raise ValueError(f"marginal {m.label or ''} sums to {total!r}, not 1")

        kept = [self.shape[0]] + [ell - 1 for ell in self.shape[1:]]
        self.offsets = np.concatenate([[0], np.cumsum(kept)[:-1]]).astype(np.int64)
        self.kept = np.asarray(kept, dtype=np.int64)
        self.n_rows = int(sum(kept))
        self.rhs = np.concatenate(
            [np.asarray(m.masses[:kk], dtype=np.float64) for m, kk in zip(marginals, kept)]
        )
        self._columns: dict[Configuration, float] = {}
        self.seed_columns: list[Configuration] = []
        self.active: set[Configuration] = set()
        self.cache: FactorCache | None = None

    def __len__(self) -> int:
        return len(self._columns)

    def __contains__(self, r: object) -> bool:
        return r in self._columns

    @property
    def n_marginals(self) -> int:
        return len(self.shape)

    @property
    def columns(self) -> list[Configuration]:
        return list(self._columns)

    def cost_of(self, r: Configuration) -> float:
        return self._columns[r]

    def costs(self) -> np.ndarray:
        return np.fromiter(self._columns.values(), dtype=np.float64, count=len(self._columns))

    def rows_of(self, configs: np.ndarray) -> np.ndarray:
        """Reduced row indices for an (n, N) configuration array; −1 marks a dropped row."""
        configs = np.asarray(configs, dtype=np.int64).reshape(-1, self.n_marginals)
        rows = configs + self.offsets[None, :]
        dropped = configs >= self.kept[None, :]
        return np.where(dropped, -1, rows)

    def add_column(self, r: Configuration, cost: float) -> ReducedLP:
        r = tuple(int(i) for i in r)
        check_configuration(r, self.shape)
        if r in self._columns:
            raise DuplicateColumnError(f"configuration {r} is already a column")
        self._columns[r] = float(cost)
        return self

    def remove_columns(self, rs: Iterable[Configuration]) -> ReducedLP:
        rs = [tuple(int(i) for i in r) for r in rs]
        active = [r for r in rs if r in self.active]
        if active:
            raise ActiveColumnError(f"cannot remove basic columns: {active[:5]}")
        missing = [r for r in rs if r not in self._columns]
        if missing:
            raise ValueError(f"not columns of this LP: {missing[:5]}")
        for r in rs:
            del self._columns[r]
        return self

    def potentials_from_rows(self, y: np.ndarray) -> DualPotentials:
        """Expand reduced-row duals to one potential per support point; dropped rows get 0."""
        u = []
        for k, ell in enumerate(self.shape):
            vals = np.zeros(ell)
            off, kk = int(self.offsets[k]), int(self.kept[k])
            vals[:kk] = y[off : off + kk]
            u.append(vals)
        return DualPotentials(tuple(u))

    def solve(self, warm: BasisState | None = None) -> LpSolution:
        from gencol_mmot.lp.simplex import solve_reduced

        return solve_reduced(self, warm)


def solve(lp: ReducedLP, warm: BasisState | None = None) -> LpSolution:
    return lp.solve(warm)


def add_column(lp: ReducedLP, r: Configuration, cost: float) -> ReducedLP:
    return lp.add_column(r, cost)


def remove_columns(lp: ReducedLP, rs: Iterable[Configuration]) -> ReducedLP:
    return lp.remove_columns(rs)


def dual_violation(potentials: DualPotentials, r: Configuration, cost: float) -> float:
    """Σ_i u_i(r_i) − c(r); positive iff the dual constraint at r is violated."""
    if len(r) != len(potentials.u):
        raise ShapeMismatchError(f"configuration {r} does not match {len(potentials.u)} potentials")
    return potentials.value(r) - cost
