"""Application outputs from an optimal plan: barycenters, spline paths and rasters."""

import itertools
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from gencol_mmot.costs.barycenter import weighted_mean
from gencol_mmot.costs.spline import batch_moments, check_times, spline_positions
from gencol_mmot.errors import ShapeMismatchError
from gencol_mmot.measures import Marginal, SparsePlan, shape_of

MERGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class WeightedPointCloud:
    points: np.ndarray  # (n, d)
    masses: np.ndarray  # (n,)

    @property
    def size(self) -> int:
        return int(self.masses.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def as_marginal(self, label: str | None = None) -> Marginal:
        return Marginal(self.points, self.masses, label)


@dataclass(frozen=True, eq=False)
class MeasurePath:
    times: tuple[float, ...]
    clouds: tuple[WeightedPointCloud, ...]

    def __iter__(self):
        return iter(zip(self.times, self.clouds))


def merge_points(points: np.ndarray, masses: np.ndarray, tol: float = MERGE_TOL) -> WeightedPointCloud:
    """Sum masses of points that coincide within ``tol`` in every coordinate.

    Output is in lexicographic coordinate order.
    """
    points = np.asarray(points, dtype=np.float64)
    masses = np.asarray(masses, dtype=np.float64)
    if points.shape[0] == 0:
        return WeightedPointCloud(points, masses)
    order = np.lexsort(points.T[::-1])
    pts, ms = points[order], masses[order]
    keep_points = [pts[0]]
    keep_masses = [ms[0]]
    for p, m in zip(pts[1:], ms[1:]):
        if np.all(np.abs(p - keep_points[-1]) <= tol):
            keep_masses[-1] += m
        else:
            keep_points.append(p)
            keep_masses.append(m)
    return WeightedPointCloud(np.array(keep_points), np.array(keep_masses))


def _gather(plan: SparsePlan, marginals: Sequence[Marginal]) -> np.ndarray:
    if plan.shape != shape_of(marginals):
        raise ShapeMismatchError(f"plan shape {plan.shape} does not match marginals {shape_of(marginals)}")
    dims = {m.dim for m in marginals}
    if len(dims) != 1:
        raise ShapeMismatchError(f"marginals live in different dimensions: {sorted(dims)}")
    configs = plan.configurations()
    return np.stack([m.points[configs[:, k]] for k, m in enumerate(marginals)], axis=1)


def barycenter_pushforward(
    plan: SparsePlan,
    marginals: Sequence[Marginal],
    weights: Sequence[float],
    merge_tol: float = MERGE_TOL,
) -> WeightedPointCloud:
    """Push the plan forward under x ↦ Σ λ_k x_k."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(marginals),):
        raise ShapeMismatchError(f"{w.shape[0]} weights for {len(marginals)} marginals")
    coords = _gather(plan, marginals)
    return merge_points(weighted_mean(coords, w), plan.masses(), merge_tol)


def spline_path(
    plan: SparsePlan,
    marginals: Sequence[Marginal],
    times: Sequence[float],
    query_times: Sequence[float],
    merge_tol: float = MERGE_TOL,
) -> MeasurePath:
    """Evaluate the natural spline of every support configuration at each query time."""
    t = check_times(times)
    if t.shape[0] != len(marginals):
        raise ShapeMismatchError(f"{t.shape[0]} knot times for {len(marginals)} marginals")
    for q in query_times:
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"query time {q} outside [0, 1]")
    knots = _gather(plan, marginals)
    moments = batch_moments(knots, t)
    masses = plan.masses()
    clouds = tuple(
        merge_points(spline_positions(knots, moments, t, float(q)), masses, merge_tol) for q in query_times
    )
    return MeasurePath(tuple(float(q) for q in query_times), clouds)


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    shape: tuple[int, ...]

    @classmethod
    def for_pixels(cls, width: int, height: int, refinement: int = 1) -> "GridSpec":
        """Grid whose nodes include every pixel center of a width×height image,
        refined ``refinement`` times. Equal-weight barycenters of R images land on it."""
        return cls(
            origin=(0.5 / width, 0.5 / height),
            spacing=(1.0 / (width * refinement), 1.0 / (height * refinement)),
            shape=((width - 1) * refinement + 1, (height - 1) * refinement + 1),
        )

    @classmethod
    def for_interval(cls, n_points: int, refinement: int = 1) -> "GridSpec":
        return cls(
            origin=(0.5 / n_points,),
            spacing=(1.0 / (n_points * refinement),),
            shape=((n_points - 1) * refinement + 1,),
        )

    def centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])


def rasterize(cloud: WeightedPointCloud, grid: GridSpec, method: str = "nearest") -> np.ndarray:
    """Deposit cloud masses on a regular grid indexed by coordinate axis.

    ``nearest`` puts each mass on its closest node (ties go to the lower
    index); ``bilinear`` splits it between the surrounding nodes.
    """
    d = len(grid.shape)
    if cloud.dim != d:
        raise ShapeMismatchError(f"cloud is {cloud.dim}-dimensional, grid is {d}-dimensional")
    origin = np.asarray(grid.origin)
    spacing = np.asarray(grid.spacing)
    shape = np.asarray(grid.shape)
    scaled = (cloud.points - origin) / spacing
    out = np.zeros(grid.shape)

    if method == "nearest":
        idx = np.ceil(scaled - 0.5).astype(np.int64)
        outside = np.any((idx < 0) | (idx >= shape), axis=1)
        if np.any(outside):
            bad = cloud.points[outside][:5].tolist()
            raise ValueError(f"{int(outside.sum())} points outside the grid, e.g. {bad}")
        np.add.at(out, tuple(idx.T), cloud.masses)
        return out

    if method == "bilinear":
        tol = 1e-9
        outside = np.any((scaled < -tol) | (scaled > shape - 1 + tol), axis=1)
        if np.any(outside):
            bad = cloud.points[outside][:5].tolist()
            raise ValueError(f"{int(outside.sum())} points outside the grid, e.g. {bad}")
        scaled = np.clip(scaled, 0, shape - 1)
        base = np.minimum(np.floor(scaled).astype(np.int64), np.maximum(shape - 2, 0))
        frac = scaled - base
        for corner in itertools.product((0, 1), repeat=d):
            c = np.asarray(corner)
            weight = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
            idx = np.minimum(base + c, shape - 1)
            np.add.at(out, tuple(idx.T), cloud.masses * weight)
        return out

    raise ValueError(f"Unknown rasterization method: {method}. Available: ['nearest', 'bilinear']")


def smooth_threshold(grid: np.ndarray, sigma: float, level: float) -> np.ndarray:
    """Gaussian blur truncated at 4σ with zero padding, then ``>= level``."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if not level > 0:
        raise ValueError(f"level must be positive, got {level}")
    grid = np.asarray(grid, dtype=np.float64)
    blurred = gaussian_filter(grid, sigma=sigma, mode="constant", truncate=4.0) if sigma > 0 else grid
    return blurred >= level
