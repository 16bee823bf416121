"""Revised primal simplex for the reduced transport LP.

Every structural column has at most N unit entries (one per marginal, minus
dropped rows). The basis is held as a sparse LU factorization with a
product-form eta file on top; it is refactored every
``Tolerances.refactor_every`` pivots, when the primal residual drifts past
``Tolerances.drift``, and once more before optimality is declared.

Phase 1 starts from the all-artificial basis, crash-pivoting the seed
columns in first. In phase 2 artificial variables are fixed at zero: they
never enter, and a basic artificial with a nonzero entry in the entering
direction blocks the step at length zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from gencol_mmot.errors import InvariantError
from gencol_mmot.lp.model import BasisKey, BasisState, LpSolution, ReducedLP
from gencol_mmot.measures import SparsePlan

logger = logging.getLogger(__name__)

DRIFT_CHECK_EVERY = 10


class Factor:
    """LU of a basis matrix plus eta updates B_k = B_0 E_1 ... E_k."""

    def __init__(self, matrix: sparse.csc_matrix):
        self.lu = splu(matrix)
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, v: np.ndarray) -> np.ndarray:
        x = self.lu.solve(np.asarray(v, dtype=np.float64))
        for p, d in self.etas:
            xp = x[p] / d[p]
            x -= d * xp
            x[p] = xp
        return x

    def btran(self, c: np.ndarray) -> np.ndarray:
        z = np.array(c, dtype=np.float64, copy=True)
        for p, d in reversed(self.etas):
            z[p] = (z[p] - (d @ z - d[p] * z[p])) / d[p]
        return self.lu.solve(z, trans="T")

    def update(self, p: int, d: np.ndarray) -> None:
        self.etas.append((p, d.copy()))


@dataclass
class FactorCache:
    """Factor and primal values of the last basis, reused by a matching warm start."""

    keys: tuple[BasisKey, ...]
    factor: Factor
    x: np.ndarray


@dataclass
class _Counters:
    pivots: int = 0
    phase1_pivots: int = 0
    refactorizations: int = 0
    degenerate: int = 0


class _Simplex:
    def __init__(self, lp: ReducedLP):
        self.lp = lp
        self.tol = lp.tolerances
        self.keys = lp.columns
        self.n = len(self.keys)
        self.m = lp.n_rows
        self.index = {r: j for j, r in enumerate(self.keys)}
        self.rows = lp.rows_of(np.array(self.keys, dtype=np.int64)) if self.n else np.zeros((0, lp.n_marginals), dtype=np.int64)
        self.c = lp.costs()
        self.b = lp.rhs
        self.basis = np.empty(self.m, dtype=np.int64)
        self.is_basic = np.zeros(self.n, dtype=bool)
        self.x = np.zeros(self.m)
        self.factor: Factor | None = None
        self.counters = _Counters()
        limit = self.tol.max_pivots
        self.max_pivots = limit if limit is not None else 20 * (self.m + self.n) + 1000

    # variables: structural j in [0, n), artificial of row i is n + i

    def _key(self, var: int) -> BasisKey:
        return self.keys[var] if var < self.n else int(var - self.n)

    def _var(self, key: BasisKey) -> int | None:
        if isinstance(key, tuple):
            return self.index.get(key)
        if 0 <= key < self.m:
            return self.n + int(key)
        return None

    def column(self, var: int) -> np.ndarray:
        v = np.zeros(self.m)
        if var < self.n:
            r = self.rows[var]
            v[r[r >= 0]] = 1.0
        else:
            v[var - self.n] = 1.0
        return v

    def _basis_entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row indices, basis positions and values of the nonzeros of B."""
        positions = np.arange(self.m)
        struct = self.basis < self.n
        r = self.rows[self.basis[struct]]
        pos = np.broadcast_to(positions[struct][:, None], r.shape)
        mask = r >= 0
        art = ~struct
        rows = np.concatenate([r[mask], self.basis[art] - self.n])
        cols = np.concatenate([pos[mask], positions[art]])
        return rows, cols, np.ones(rows.shape[0])

    def _basis_matrix(self) -> sparse.csc_matrix:
        rows, cols, data = self._basis_entries()
        return sparse.csc_matrix((data, (rows, cols)), shape=(self.m, self.m))

    def _set_basis(self, vars_: np.ndarray) -> None:
        self.basis = np.asarray(vars_, dtype=np.int64)
        self.is_basic[:] = False
        structural = self.basis[self.basis < self.n]
        self.is_basic[structural] = True

    def refactor(self) -> None:
        self.factor = Factor(self._basis_matrix())
        self.x = self.factor.ftran(self.b)
        self.counters.refactorizations += 1

    def residual(self) -> float:
        rows, cols, _ = self._basis_entries()
        acc = np.bincount(rows, weights=self.x[cols], minlength=self.m)
        return float(np.max(np.abs(acc - self.b)))

    def infeasibility(self) -> float:
        art = self.basis >= self.n
        return math.fsum(np.maximum(self.x[art], 0.0).tolist())

    # starts

    def cold_start(self) -> None:
        self._set_basis(np.arange(self.n, self.n + self.m))
        self.factor = Factor(sparse.identity(self.m, format="csc"))
        self.x = self.b.copy()
        self.counters.refactorizations += 1
        for r in self.lp.seed_columns:
            q = self.index.get(r)
            if q is None or self.is_basic[q]:
                continue
            d = self.factor.ftran(self.column(q))
            p, theta = self._ratio(d, phase=1, bland=False)
            if p is None or self.basis[p] < self.n:
                continue
            self._pivot(p, q, d, theta)

    def warm_start(self, warm: BasisState) -> bool:
        if len(warm.keys) != self.m:
            return False
        vars_ = [self._var(k) for k in warm.keys]
        if any(v is None for v in vars_) or len(set(vars_)) != self.m:
            return False
        self._set_basis(np.array(vars_, dtype=np.int64))
        cache = self.lp.cache
        if cache is not None and cache.keys == warm.keys:
            self.factor = cache.factor
            self.x = cache.x.copy()
            self.lp.cache = None
        else:
            try:
                self.refactor()
            except RuntimeError:
                logger.debug("warm basis is singular; starting cold")
                return False
        if np.any(self.x < -self.tol.feasibility):
            logger.debug("warm basis is primal infeasible; starting cold")
            return False
        return True

    # iterations

    def _phase_costs(self, phase: int) -> np.ndarray:
        art = self.basis >= self.n
        cb = np.zeros(self.m)
        if phase == 1:
            cb[art] = 1.0
        else:
            cb[~art] = self.c[self.basis[~art]]
        return cb

    def price(self, phase: int) -> tuple[np.ndarray, np.ndarray]:
        y = self.factor.btran(self._phase_costs(phase))
        if self.n == 0:
            return np.zeros(0), y
        y_ext = np.append(y, 0.0)
        lhs = y_ext[self.rows].sum(axis=1)
        rc = -lhs if phase == 1 else self.c - lhs
        rc[self.is_basic] = 0.0
        return rc, y

    def _entering(self, rc: np.ndarray, bland: bool) -> int | None:
        candidates = np.flatnonzero(rc < -self.tol.optimality)
        if candidates.size == 0:
            return None
        if bland:
            return int(candidates[0])
        return int(candidates[np.argmin(rc[candidates])])

    def _ratio(self, d: np.ndarray, phase: int, bland: bool) -> tuple[int | None, float]:
        piv = self.tol.zero_pivot
        if phase == 2:
            art = self.basis >= self.n
            blocking = np.flatnonzero(art & (np.abs(d) > piv))
            if blocking.size:
                if bland:
                    return int(blocking[np.argmin(self.basis[blocking])]), 0.0
                return int(blocking[np.argmax(np.abs(d[blocking]))]), 0.0
        cand = np.flatnonzero(d > piv)
        if cand.size == 0:
            return None, 0.0
        ratios = np.maximum(self.x[cand], 0.0) / d[cand]
        theta = float(ratios.min())
        ties = cand[ratios <= theta + 1e-12]
        if bland:
            p = int(ties[np.argmin(self.basis[ties])])
        else:
            p = int(ties[np.argmax(d[ties])])
        return p, theta

    def _pivot(self, p: int, q: int, d: np.ndarray, theta: float) -> None:
        self.x -= theta * d
        self.x[p] = theta
        leaving = self.basis[p]
        if leaving < self.n:
            self.is_basic[leaving] = False
        self.basis[p] = q
        self.is_basic[q] = True
        self.factor.update(p, d)
        self.counters.pivots += 1
        if theta <= self.tol.feasibility:
            self.counters.degenerate += 1
        else:
            self.counters.degenerate = 0
        if len(self.factor.etas) >= self.tol.refactor_every:
            self.refactor()
        elif self.counters.pivots % DRIFT_CHECK_EVERY == 0 and self.residual() > self.tol.drift:
            logger.debug("primal drift above %.1e; refactoring", self.tol.drift)
            self.refactor()

    def run(self, phase: int) -> str:
        while True:
            if self.counters.pivots >= self.max_pivots:
                return "iteration-limit"
            rc, _ = self.price(phase)
            bland = self.counters.degenerate >= self.tol.bland_after
            q = self._entering(rc, bland)
            if q is None:
                if self.factor.etas:
                    self.refactor()
                    continue
                return "optimal"
            d = self.factor.ftran(self.column(q))
            p, theta = self._ratio(d, phase, bland)
            if p is None:
                raise InvariantError("unbounded direction in a bounded transport LP")
            self._pivot(p, q, d, theta)

    # results

    def solution(self, status: str, warm_started: bool) -> LpSolution:
        keys = tuple(self._key(int(v)) for v in self.basis)
        basis = BasisState(keys)
        self.lp.cache = FactorCache(keys, self.factor, self.x.copy())
        self.lp.active = basis.structural
        counters = self.counters
        if status != "optimal":
            return LpSolution(
                status, None, None, None, basis,
                counters.pivots, counters.phase1_pivots, counters.refactorizations, warm_started,
            )
        _, y = self.price(phase=2)
        entries = {}
        terms = []
        for pos, var in enumerate(self.basis):
            if var < self.n and self.x[pos] > self.tol.plan_zero:
                entries[self.keys[var]] = float(self.x[pos])
                terms.append(self.c[var] * self.x[pos])
        plan = SparsePlan(entries, self.lp.shape)
        return LpSolution(
            "optimal",
            plan,
            self.lp.potentials_from_rows(y),
            math.fsum(terms),
            basis,
            counters.pivots,
            counters.phase1_pivots,
            counters.refactorizations,
            warm_started,
        )


def solve_reduced(lp: ReducedLP, warm: BasisState | None = None) -> LpSolution:
    """Two-phase revised simplex on ``lp``, optionally warm-started from ``warm``."""
    sx = _Simplex(lp)
    warm_started = warm is not None and sx.warm_start(warm)
    if not warm_started:
        sx = _Simplex(lp)
        sx.cold_start()

    tol = lp.tolerances
    if sx.infeasibility() > tol.feasibility:
        status = sx.run(phase=1)
        sx.counters.phase1_pivots = sx.counters.pivots
        if status != "optimal":
            return sx.solution(status, warm_started)
        if sx.infeasibility() > tol.feasibility:
            logger.debug("phase 1 ended with infeasibility %.3e", sx.infeasibility())
            return sx.solution("infeasible", warm_started)
    sx.counters.degenerate = 0
    status = sx.run(phase=2)
    result = sx.solution(status, warm_started)
    logger.debug(
        "reduced LP: %d columns, status %s, objective %s, %d pivots (warm=%s)",
        sx.n, result.status, result.objective, result.pivots, warm_started,
    )
    return result
