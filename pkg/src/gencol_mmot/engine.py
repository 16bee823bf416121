"""Genetic column generation.

The loop alternates reduced-LP solves with random one-coordinate mutations
of support configurations. A child enters Ω only if it violates the dual
constraint of the current potentials; Ω is tail-cleared back below
β·Σℓ_k by dropping its oldest inactive members. When the random search
stalls on a small enough product, a full scan supplies the violated
configurations the mutations missed.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from gencol_mmot.costs import CostEvaluator, CostFunction, get_cost
from gencol_mmot.errors import InfeasibleError, InvariantError, IterationLimitError, ShapeMismatchError
from gencol_mmot.init import InitResult, nw_corner
from gencol_mmot.lp import LpSolution, ReducedLP, dual_violation
from gencol_mmot.measures import (
    Configuration,
    DualPotentials,
    Marginal,
    ReducedSet,
    SparsePlan,
    product_size,
    shape_of,
    total_support,
)
from gencol_mmot.types import CostSpec, GenColConfig

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 1_000_000
CERTIFY_CHUNK = 65_536


@dataclass
class ProgressRecord:
    iteration: int
    omega_size: int
    support_size: int
    objective: float
    accepted: int


@dataclass
class GenColState:
    marginals: tuple[Marginal, ...]
    config: GenColConfig
    evaluator: CostEvaluator
    omega: ReducedSet
    lp: ReducedLP
    solution: LpSolution
    rng: np.random.Generator
    iteration: int = 0
    accepted: int = 0
    rejected: int = 0
    duplicates: int = 0
    stall: int = 0
    cleared: int = 0
    scans: int = 0
    scanned_in: int = 0
    peak_omega: int = 0
    history: list[tuple[int, float]] = field(default_factory=list)
    termination: str = ""
    on_solve: Callable[[ProgressRecord], None] | None = None
    _support: list[Configuration] = field(default_factory=list, repr=False)
    _weights: np.ndarray | None = field(default=None, repr=False)
    _saturation_reported: bool = field(default=False, repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.evaluator.shape

    @property
    def plan(self) -> SparsePlan:
        return self.solution.plan

    @property
    def potentials(self) -> DualPotentials:
        return self.solution.potentials

    @property
    def objective(self) -> float:
        return self.solution.objective

    @property
    def capacity(self) -> int:
        return self.omega.capacity

    def record(self) -> ProgressRecord:
        return ProgressRecord(self.iteration, len(self.omega), len(self.plan), self.objective, self.accepted)

    def _adopt(self, solution: LpSolution) -> None:
        if solution.status == "infeasible":
            raise InfeasibleError("reduced problem on Ω is infeasible")
        if solution.status == "iteration-limit":
            raise IterationLimitError(f"LP pivot limit reached after {solution.pivots} pivots")
        self.solution = solution
        self._support = list(solution.plan.entries)
        masses = solution.plan.masses()
        self._weights = masses / masses.sum() if masses.size else None
        self.peak_omega = max(self.peak_omega, len(self.omega))
        self.history.append((self.iteration, solution.objective))
        if self.on_solve is not None:
            self.on_solve(self.record())
        logger.debug(
            "solve %d: |Ω|=%d support=%d objective=%.16e pivots=%d",
            self.iteration, len(self.omega), len(self._support), solution.objective, solution.pivots,
        )


def _as_cost(cost: CostSpec | CostFunction) -> CostFunction:
    return cost if isinstance(cost, CostFunction) else get_cost(cost)


def start(
    marginals: Sequence[Marginal],
    cost: CostSpec | CostFunction,
    config: GenColConfig,
    init: InitResult,
    on_solve: Callable[[ProgressRecord], None] | None = None,
) -> GenColState:
    """Solve the reduced problem on the initial set."""
    marginals = tuple(marginals)
    sigma = total_support(shape_of(marginals))
    capacity = config.capacity(sigma)
    evaluator = CostEvaluator(_as_cost(cost), marginals, cache_size=config.cache_factor * capacity)

    omega = init.omega.copy()
    omega.capacity = capacity
    lp = ReducedLP(marginals, config.tolerances)
    members = list(omega)
    if members:
        for r, c in zip(members, evaluator.many(np.array(members, dtype=np.int64))):
            lp.add_column(r, float(c))
    lp.seed_columns = list(init.plan.entries)

    solution = lp.solve()
    state = GenColState(
        marginals=marginals,
        config=config,
        evaluator=evaluator,
        omega=omega,
        lp=lp,
        solution=solution,
        rng=np.random.default_rng(config.seed),
        on_solve=on_solve,
    )
    state._adopt(solution)
    logger.info(
        "initial reduced problem: N=%d Σℓ=%d |Ω|=%d capacity=%d objective=%.16e",
        len(marginals), sigma, len(omega), capacity, solution.objective,
    )
    return state


def propose_child(state: GenColState, rng: np.random.Generator) -> Configuration | None:
    """Mutate one coordinate of a random support configuration.

    Returns None when the child is already in Ω, or when every marginal is a
    single point so no mutation exists.
    """
    support = state._support
    if not support:
        raise InvariantError("cannot propose a child from an empty support")
    if state.config.parent_sampling == "mass" and state._weights is not None:
        parent = support[int(rng.choice(len(support), p=state._weights))]
    else:
        parent = support[int(rng.integers(len(support)))]

    movable = [k for k, ell in enumerate(state.shape) if ell >= 2]
    if not movable:
        return None
    k = movable[int(rng.integers(len(movable)))]
    ell, current = state.shape[k], parent[k]

    radius = state.config.locality_radius
    if radius is not None:
        lo, hi = max(0, current - radius), min(ell - 1, current + radius)
        choices = [v for v in range(lo, hi + 1) if v != current]
        value = choices[int(rng.integers(len(choices)))]
    else:
        value = int(rng.integers(ell - 1))
        if value >= current:
            value += 1

    child = parent[:k] + (value,) + parent[k + 1 :]
    if child in state.omega:
        return None
    return child


def accept(state: GenColState, child: Configuration, cost: float) -> bool:
    return dual_violation(state.potentials, child, cost) > state.config.acceptance_tol


def tail_clear(state: GenColState, keep: Sequence[Configuration] = ()) -> GenColState:
    """Drop the Σℓ_k oldest members of Ω that are neither in the support nor basic."""
    if not state.omega.over_capacity:
        return state
    count = total_support(state.shape)
    protected = set(state._support) | state.lp.active | set(keep)
    victims = state.omega.oldest(count, exclude=protected)
    if not victims:
        if not state._saturation_reported:
            logger.warning(
                "tail-clearing found no inactive configurations (|Ω|=%d, capacity=%d)",
                len(state.omega), state.capacity,
            )
            state._saturation_reported = True
        return state
    state.lp.remove_columns(victims)
    state.omega.remove(victims)
    state.cleared += len(victims)
    logger.debug("tail-cleared %d configurations, |Ω|=%d", len(victims), len(state.omega))
    return state


def resolve(state: GenColState) -> GenColState:
    state.iteration += 1
    state._adopt(state.lp.solve(warm=state.solution.basis))
    return state


def _product_chunks(shape: tuple[int, ...], n: int, rng: np.random.Generator | None = None):
    """Configurations in blocks: the first ``n`` in C order, or ``n`` uniform draws."""
    for lo in range(0, n, CERTIFY_CHUNK):
        hi = min(n, lo + CERTIFY_CHUNK)
        if rng is None:
            yield np.stack(np.unravel_index(np.arange(lo, hi), shape), axis=1)
        else:
            yield rng.integers(0, np.asarray(shape), size=(hi - lo, len(shape)))


def scan_violations(state: GenColState, limit: int) -> list[tuple[Configuration, float]]:
    """The ``limit`` most violated configurations outside Ω, with their costs.

    Scans the whole product. Ties are broken by flat index.
    """
    tol = state.config.tolerances.optimality
    found: list[tuple[float, int, Configuration, float]] = []
    offset = 0
    for configs in _product_chunks(state.shape, product_size(state.shape)):
        costs = state.evaluator.many(configs)
        gap = state.potentials.values(configs) - costs
        for j in np.flatnonzero(gap > tol):
            r = tuple(int(i) for i in configs[j])
            if r not in state.omega:
                found.append((-float(gap[j]), offset + int(j), r, float(costs[j])))
        offset += len(configs)
    return [(r, c) for _, _, r, c in heapq.nsmallest(limit, found)]


def escape_stall(state: GenColState) -> bool:
    """Add the worst violators of the full product to Ω and resolve.

    Only runs when the product has at most ``stall_scan_limit`` entries.
    Returns False when nothing was added, in which case the current
    potentials are dual feasible (or the product was too large to scan).
    """
    if product_size(state.shape) > state.config.stall_scan_limit:
        return False
    found = scan_violations(state, total_support(state.shape))
    if not found:
        return False
    for r, c in found:
        state.omega.add(r)
        state.lp.add_column(r, c)
    tail_clear(state, keep=[r for r, _ in found])
    state.scans += 1
    state.scanned_in += len(found)
    state.stall = 0
    logger.info(
        "stalled at objective %.16e; scan added %d violated configurations (worst %s)",
        state.objective, len(found), found[0][0],
    )
    resolve(state)
    return True


def run(
    marginals: Sequence[Marginal],
    cost: CostSpec | CostFunction,
    config: GenColConfig | None = None,
    init: InitResult | None = None,
    on_solve: Callable[[ProgressRecord], None] | None = None,
) -> GenColState:
    """Run the loop until ``max_stall`` consecutive proposals are rejected.

    A stall on a product of at most ``stall_scan_limit`` entries is
    followed by a full scan; the loop resumes if the scan finds violated
    configurations and ends otherwise.
    """
    config = config or GenColConfig()
    init = init or nw_corner(marginals, beta=config.beta)
    state = start(marginals, cost, config, init, on_solve=on_solve)
    stall_limit = config.stall_limit(total_support(state.shape))
    batch = config.batch_size if config.resolve_policy == "batch" else 1
    pending = 0
    t0 = time.perf_counter()

    while True:
        if config.max_iterations is not None and state.iteration >= config.max_iterations:
            state.termination = "max-iterations"
            break
        if state.stall >= stall_limit:
            if pending:
                resolve(state)
                pending = 0
            if not escape_stall(state):
                state.termination = "stall"
                break
            continue
        child = propose_child(state, state.rng)
        if child is None:
            state.rejected += 1
            state.duplicates += 1
            state.stall += 1
            continue
        c = state.evaluator(child)
        if not accept(state, child, c):
            state.rejected += 1
            state.stall += 1
            continue

        state.accepted += 1
        state.stall = 0
        state.omega.add(child)
        state.lp.add_column(child, c)
        tail_clear(state)
        pending += 1
        if pending >= batch:
            resolve(state)
            pending = 0

    if pending:
        resolve(state)
    logger.info(
        "GenCol finished (%s): %d solves, %d accepted, %d rejected, %d scans, objective %.16e, support %d, "
        "peak |Ω| %d, %.2fs",
        state.termination, state.iteration, state.accepted, state.rejected, state.scans,
        state.objective, len(state.plan), state.peak_omega, time.perf_counter() - t0,
    )
    return state


@dataclass
class Certificate:
    exhaustive: bool
    checked: int
    product_size: int
    violations: int
    max_violation: float
    worst: Configuration | None
    tolerance: float

    @property
    def exact_optimum(self) -> bool:
        return self.exhaustive and self.violations == 0

    def as_dict(self) -> dict[str, Any]:
        return {
            "exhaustive": self.exhaustive,
            "checked": self.checked,
            "product_size": self.product_size,
            "violations": self.violations,
            "max_violation": self.max_violation,
            "worst": list(self.worst) if self.worst is not None else None,
            "tolerance": self.tolerance,
            "exact_optimum": self.exact_optimum,
        }


def certify_potentials(
    potentials: DualPotentials,
    evaluator: CostEvaluator,
    tol: float,
    budget: int = 100_000,
    seed: int = 0,
) -> Certificate:
    """Check Σ_i u_i(r_i) ≤ c(r) + tol over the whole product, or a uniform sample of it."""
    shape = evaluator.shape
    if potentials.shape != shape:
        raise ShapeMismatchError(f"potentials of shape {potentials.shape} for marginals {shape}")
    total = product_size(shape)
    exhaustive = total <= EXHAUSTIVE_LIMIT
    rng = np.random.default_rng(seed)
    checked = violations = 0
    max_violation = -math.inf
    worst: Configuration | None = None

    n = total if exhaustive else budget
    for configs in _product_chunks(shape, n, None if exhaustive else rng):
        gap = potentials.values(configs) - evaluator.many(configs)
        violations += int(np.count_nonzero(gap > tol))
        j = int(np.argmax(gap))
        if gap[j] > max_violation:
            max_violation = float(gap[j])
            worst = tuple(int(i) for i in configs[j])
        checked += len(configs)

    cert = Certificate(exhaustive, checked, total, violations, max_violation, worst, tol)
    logger.info(
        "certificate: %s %d of %d configurations, %d violations, max violation %.3e",
        "scanned" if exhaustive else "sampled", checked, total, violations, max_violation,
    )
    return cert


def certify(
    state: GenColState,
    budget: int = 100_000,
    tol: float | None = None,
    seed: int | None = None,
) -> Certificate:
    """Certify the current potentials; ``tol`` defaults to the optimality tolerance."""
    return certify_potentials(
        state.potentials,
        state.evaluator,
        state.config.tolerances.optimality if tol is None else tol,
        budget=budget,
        seed=state.config.seed if seed is None else seed,
    )
