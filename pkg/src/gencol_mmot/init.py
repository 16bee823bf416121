"""Feasible starting sets for the reduced problem."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from gencol_mmot.errors import ShapeMismatchError
from gencol_mmot.measures import (
    Configuration,
    Marginal,
    ReducedSet,
    SparsePlan,
    product_size,
    shape_of,
    total_support,
)

logger = logging.getLogger(__name__)

# relative to each marginal's total mass
ZERO_RESIDUAL = 1e-15
ENUMERATE_LIMIT = 1_000_000

Ordering = Literal["stored", "lexicographic"] | Sequence[Sequence[int]]


@dataclass
class InitResult:
    omega: ReducedSet
    plan: SparsePlan
    trace: list[tuple[Configuration, float]] = field(default_factory=list)


def lexicographic_order(m: Marginal) -> np.ndarray:
    """Permutation sorting support points by coordinates, first axis most significant."""
    return np.lexsort(m.points.T[::-1])


def _resolve_order(marginals: Sequence[Marginal], order: Ordering) -> list[np.ndarray]:
    if isinstance(order, str):
        if order == "stored":
            return [np.arange(m.size) for m in marginals]
        if order == "lexicographic":
            return [lexicographic_order(m) for m in marginals]
        raise ValueError(f"Unknown ordering: {order}. Available: ['stored', 'lexicographic']")
    if len(order) != len(marginals):
        raise ShapeMismatchError(f"{len(order)} orderings for {len(marginals)} marginals")
    perms = []
    for k, (perm, m) in enumerate(zip(order, marginals)):
        perm = np.asarray(perm, dtype=np.int64)
        if perm.shape != (m.size,) or not np.array_equal(np.sort(perm), np.arange(m.size)):
            raise ValueError(f"order[{k}] is not a permutation of range({m.size})")
        perms.append(perm)
    return perms


def nw_corner(
    marginals: Sequence[Marginal],
    order: Ordering = "stored",
    beta: float = 3.0,
) -> InitResult:
    """Multi-marginal north-west corner rule.

    Starting from the first point of every ordered support, assign the
    smallest residual mass to the current configuration, then advance every
    coordinate whose residual hit zero (ties advance together). Stops as soon
    as one support is exhausted.
    """
    perms = _resolve_order(marginals, order)
    shape = shape_of(marginals)
    n = len(marginals)
    pos = [0] * n
    residual = np.array([float(m.masses[p[0]]) for m, p in zip(marginals, perms)])
    zero = ZERO_RESIDUAL * np.array([math.fsum(m.masses.tolist()) for m in marginals])
    entries: dict[Configuration, float] = {}
    trace: list[tuple[Configuration, float]] = []

    while True:
        r = tuple(int(perms[k][pos[k]]) for k in range(n))
        mass = float(residual.min())
        if mass > 0:
            entries[r] = entries.get(r, 0.0) + mass
            trace.append((r, mass))
        residual -= mass
        exhausted = False
        for k in np.flatnonzero(residual <= zero):
            pos[k] += 1
            if pos[k] == shape[k]:
                exhausted = True
            else:
                residual[k] = float(marginals[k].masses[perms[k][pos[k]]])
        if exhausted:
            break

    omega = ReducedSet(math.floor(beta * total_support(shape)), (r for r, _ in trace))
    return InitResult(omega=omega, plan=SparsePlan(entries, shape), trace=trace)


def augment_random(
    omega: ReducedSet,
    target: int,
    shape: Sequence[int],
    seed: int | np.random.Generator = 0,
) -> ReducedSet:
    """Fill a copy of ``omega`` up to ``target`` distinct random configurations.

    When ``target`` exceeds the product size the whole product is taken and a
    warning is logged.
    """
    if target < len(omega):
        raise ValueError(f"target {target} is smaller than the current set ({len(omega)})")
    rng = np.random.default_rng(seed)
    out = omega.copy()
    total = product_size(shape)
    if target > total:
        logger.warning(
            "augmentation target %d exceeds the %d configurations of the product; filling to %d",
            target, total, total,
        )
        target = total
    need = target - len(out)
    if need == 0:
        return out

    if total <= ENUMERATE_LIMIT and total <= 4 * target:
        grid = np.indices(tuple(shape)).reshape(len(shape), -1).T
        free = [r for r in map(tuple, grid.tolist()) if r not in out]
        for j in rng.permutation(len(free))[:need]:
            out.add(free[int(j)])
        return out

    high = np.asarray(shape, dtype=np.int64)
    while len(out) < target:
        batch = rng.integers(0, high, size=(max(16, 2 * (target - len(out))), len(shape)))
        for row in batch:
            r = tuple(int(i) for i in row)
            if r not in out:
                out.add(r)
                if len(out) == target:
                    break
    return out


def reflection_init(first: Marginal, second: Marginal | None = None, beta: float = 3.0) -> InitResult:
    """Plan of x ↦ (x, reflected x): mass μ_1(i) on (i, ℓ−1−i).

    ``second`` must be the index-reversed copy of ``first``; it defaults to it.
    """
    ell = first.size
    if second is not None:
        if second.size != ell:
            raise ShapeMismatchError(f"reflected marginal has {second.size} points, expected {ell}")
        mismatch = np.abs(second.masses[::-1] - first.masses)
        if mismatch.max() > 1e-12:
            bad = int(np.argmax(mismatch))
            raise ValueError(
                f"marginals are not mutually reflected: mass {first.masses[bad]!r} at index {bad} "
                f"vs {second.masses[ell - 1 - bad]!r} at index {ell - 1 - bad}"
            )
    entries = {(i, ell - 1 - i): float(first.masses[i]) for i in range(ell)}
    trace = list(entries.items())
    omega = ReducedSet(math.floor(beta * 2 * ell), entries)
    return InitResult(omega=omega, plan=SparsePlan(entries, (ell, ell)), trace=trace)
