"""Pluggable LP backends for cross-checking the reduced simplex.

A backend takes a column set and returns primal masses, potentials and a
status. ``HighsBackend`` wraps ``scipy.optimize.linprog`` and serves as the
brute-force oracle on small products.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from gencol_mmot.costs.base import CostEvaluator
from gencol_mmot.measures import DualPotentials, Marginal, SparsePlan, product_size, shape_of
from gencol_mmot.types import Tolerances

from .model import LpStatus, ReducedLP

MAX_FULL_PRODUCT = 200_000


@dataclass
class BackendResult:
    status: LpStatus
    plan: SparsePlan | None
    potentials: DualPotentials | None
    objective: float | None


class LpBackend(Protocol):
    name: str

    def solve_columns(
        self, marginals: Sequence[Marginal], columns: np.ndarray, costs: np.ndarray
    ) -> BackendResult: ...


class SimplexBackend:
    name = "simplex"

    def __init__(self, tolerances: Tolerances | None = None):
        self.tolerances = tolerances

    def solve_columns(self, marginals, columns, costs) -> BackendResult:
        lp = ReducedLP(marginals, self.tolerances)
        for r, c in zip(np.asarray(columns, dtype=np.int64), costs):
            lp.add_column(tuple(r), float(c))
        sol = lp.solve()
        return BackendResult(sol.status, sol.plan, sol.potentials, sol.objective)


class HighsBackend:
    """Full-row LP through HiGHS; duals come from the equality marginals."""

    name = "highs"

    def __init__(self, plan_zero: float = 1e-13):
        self.plan_zero = plan_zero

    def solve_columns(self, marginals, columns, costs) -> BackendResult:
        shape = shape_of(marginals)
        columns = np.asarray(columns, dtype=np.int64).reshape(-1, len(shape))
        costs = np.asarray(costs, dtype=np.float64)
        offsets = np.concatenate([[0], np.cumsum(shape)[:-1]])
        n = columns.shape[0]
        rows = (columns + offsets[None, :]).reshape(-1)
        cols = np.repeat(np.arange(n), len(shape))
        a_eq = sparse.csc_matrix((np.ones(rows.shape[0]), (rows, cols)), shape=(int(sum(shape)), n))
        b_eq = np.concatenate([m.masses for m in marginals])
        res = linprog(costs, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status == 2:
            return BackendResult("infeasible", None, None, None)
        if res.status == 1:
            return BackendResult("iteration-limit", None, None, None)
        if res.status != 0:
            raise RuntimeError(f"HiGHS failed: {res.message}")
        entries = {
            tuple(int(i) for i in columns[j]): float(res.x[j])
            for j in range(n)
            if res.x[j] > self.plan_zero
        }
        y = np.asarray(res.eqlin.marginals, dtype=np.float64)
        u = tuple(y[offsets[k] : offsets[k] + ell] for k, ell in enumerate(shape))
        return BackendResult("optimal", SparsePlan(entries, shape), DualPotentials(u), float(res.fun))


BACKEND_REGISTRY = {
    "simplex": SimplexBackend,
    "highs": HighsBackend,
}


def get_backend(name: str) -> LpBackend:
    if name not in BACKEND_REGISTRY:
        raise ValueError(f"Unknown LP backend: {name}. Available: {list(BACKEND_REGISTRY.keys())}")
    return BACKEND_REGISTRY[name]()


def full_product(shape: Sequence[int]) -> np.ndarray:
    """Every configuration of the product grid, lexicographic, as an (n, N) array."""
    if product_size(shape) > MAX_FULL_PRODUCT:
        raise ValueError(f"product of size {product_size(shape)} is too large to enumerate")
    return np.indices(tuple(shape)).reshape(len(shape), -1).T.astype(np.int64)


def solve_full_product(evaluator: CostEvaluator, backend: LpBackend | None = None) -> BackendResult:
    """Brute-force MMOT over all configurations."""
    configs = full_product(evaluator.shape)
    backend = backend or HighsBackend()
    return backend.solve_columns(evaluator.marginals, configs, evaluator.many(configs))


def relative_gap(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))

