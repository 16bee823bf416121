"""Reproducible problem instances for the CLI workflows and the test suite."""

import math
from collections.abc import Sequence

import numpy as np

from gencol_mmot.init import InitResult, augment_random, nw_corner, reflection_init
from gencol_mmot.measures import Marginal, SparsePlan, shape_of, total_support
from gencol_mmot.types import CustomSpec

DROP_RELATIVE = 1e-6


def _gaussian(x: np.ndarray, mean, sd: float) -> np.ndarray:
    diff = np.atleast_2d(x) - np.asarray(mean, dtype=np.float64)
    return np.exp(-0.5 * np.einsum("nd,nd->n", diff, diff) / sd**2)


def _normalized(points: np.ndarray, weights: np.ndarray, label: str) -> Marginal:
    """Drop grid points carrying less than ``DROP_RELATIVE`` of the peak, then normalize."""
    keep = weights >= DROP_RELATIVE * weights.max()
    w = weights[keep]
    return Marginal.create(points[keep], w / math.fsum(w), label=label)


def reflected_pair(ell: int = 100) -> tuple[Marginal, Marginal]:
    """Two measures on ``ell`` equispaced points of [0, 1] with μ_2(x) = μ_1(1 − x).

    μ_1 is a two-bump Gaussian mixture on a uniform floor, so every grid point
    keeps positive mass.
    """
    if ell < 2:
        raise ValueError(f"need at least 2 grid points, got {ell}")
    x = np.linspace(0.0, 1.0, ell)
    density = (
        0.6 * np.exp(-0.5 * ((x - 0.25) / 0.08) ** 2)
        + 0.4 * np.exp(-0.5 * ((x - 0.62) / 0.12) ** 2)
        + 0.05
    )
    masses = density / math.fsum(density)
    first = Marginal.create(x, masses, label="mu1")
    second = Marginal.create(x, masses[::-1].copy(), label="mu2")
    return first, second


def reflected_start(
    first: Marginal,
    second: Marginal,
    beta: float = 3.0,
    n_random: int | None = None,
    seed: int = 0,
) -> InitResult:
    """Reflection plan support plus ``n_random`` random configurations (default Σℓ)."""
    init = reflection_init(first, second, beta=beta)
    extra = total_support((first.size, second.size)) if n_random is None else n_random
    target = min(len(init.omega) + extra, init.omega.capacity)
    omega = augment_random(init.omega, target, (first.size, second.size), seed=seed)
    return InitResult(omega=omega, plan=init.plan, trace=init.trace)


def monotone_coupling(first: Marginal, second: Marginal) -> SparsePlan:
    """Monotone rearrangement of two measures on the line."""
    if first.dim != 1 or second.dim != 1:
        raise ValueError("monotone coupling is defined for measures on the line")
    return nw_corner([first, second], order="lexicographic").plan


def monotone_coupling_cost(first: Marginal, second: Marginal) -> float:
    """Exact quadratic transport cost between two measures on the line."""
    plan = monotone_coupling(first, second)
    configs = plan.configurations()
    gaps = first.points[configs[:, 0], 0] - second.points[configs[:, 1], 0]
    return math.fsum(plan.masses() * gaps**2)


def gaussian_series_1d(n_marginals: int = 6, n_points: int = 101) -> list[Marginal]:
    """Gaussians on ``n_points`` gridpoints of [0, 1] whose mean swings and width grows."""
    x = np.linspace(0.0, 1.0, n_points).reshape(-1, 1)
    out = []
    for k, t in enumerate(np.linspace(0.0, 1.0, n_marginals)):
        mean = 0.5 + 0.25 * math.sin(2.0 * math.pi * t)
        sd = 0.04 + 0.04 * t
        out.append(_normalized(x, _gaussian(x, [mean], sd), label=f"gauss{k}"))
    return out


def gaussian_series_2d(n_marginals: int = 5, width: int = 50) -> list[Marginal]:
    """Gaussians on the pixel centers of a width×width grid, moving along a half circle."""
    c = (np.arange(width) + 0.5) / width
    xx, yy = np.meshgrid(c, c, indexing="ij")
    grid = np.column_stack([xx.ravel(), yy.ravel()])
    out = []
    for k, t in enumerate(np.linspace(0.0, 1.0, n_marginals)):
        angle = math.pi * t
        mean = (0.5 + 0.3 * math.cos(angle), 0.3 + 0.3 * math.sin(angle))
        out.append(_normalized(grid, _gaussian(grid, mean, 0.06), label=f"gauss{k}"))
    return out


def random_marginal(rng: np.random.Generator, size: int, dim: int = 1, label: str | None = None) -> Marginal:
    """Uniform points in the unit cube with Dirichlet(1, ..., 1) masses."""
    masses = rng.dirichlet(np.ones(size))
    masses = np.maximum(masses, 1e-9)
    return Marginal.create(rng.random((size, dim)), masses / math.fsum(masses), label=label)


def random_family(rng: np.random.Generator, sizes: Sequence[int], dim: int = 1) -> list[Marginal]:
    return [random_marginal(rng, ell, dim, label=f"m{k}") for k, ell in enumerate(sizes)]


def random_cost_table(rng: np.random.Generator, shape: Sequence[int]) -> np.ndarray:
    return rng.random(tuple(shape))


def table_cost(table: np.ndarray, name: str = "table") -> CustomSpec:
    """Index-based custom cost reading entries of a dense cost tensor."""
    table = np.asarray(table, dtype=np.float64)
    return CustomSpec(callback=lambda r: float(table[r]), by_index=True, name=name)


def translated_copies(base: Marginal, shifts: Sequence[Sequence[float]]) -> list[Marginal]:
    shifts = np.asarray(shifts, dtype=np.float64)
    if shifts.ndim != 2 or shifts.shape[1] != base.dim:
        raise ValueError(f"shifts must be (n, {base.dim}), got {shifts.shape}")
    return [
        Marginal(base.points + s, base.masses, label=f"{base.label or 'copy'}+{k}")
        for k, s in enumerate(shifts)
    ]


def check_family(marginals: Sequence[Marginal]) -> tuple[int, ...]:
    """Shape of a family, rejecting fewer than two marginals."""
    if len(marginals) < 2:
        raise ValueError(f"need at least 2 marginals, got {len(marginals)}")
    return shape_of(marginals)
