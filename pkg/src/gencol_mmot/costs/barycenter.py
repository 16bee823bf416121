from collections.abc import Sequence

import numpy as np

from gencol_mmot.errors import ShapeMismatchError
from gencol_mmot.types import BarycenterSpec

from .base import CostFunction


def _as_points(points) -> np.ndarray:
    try:
        arr = np.array(points, dtype=np.float64)
    except ValueError as exc:
        raise ShapeMismatchError(f"points must share one dimension: {exc}") from exc
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected N points in R^d, got shape {arr.shape}")
    return arr


def _check_weights(weights: Sequence[float], n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ShapeMismatchError(f"{w.shape[0]} weights for {n} points")
    return w


def weighted_mean(coords: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """B_λ for a batch: (n, N, d) coordinates to (n, d) means."""
    return np.einsum("k,nkd->nd", weights, coords)


def mean_squared_deviation(coords: np.ndarray, weights: np.ndarray) -> np.ndarray:
    centre = weighted_mean(coords, weights)
    dev = coords - centre[:, None, :]
    return np.einsum("k,nkd,nkd->n", weights, dev, dev)


def barycenter_map(points, weights) -> np.ndarray:
    """Euclidean weighted mean Σ λ_i x_i."""
    pts = _as_points(points)
    w = _check_weights(weights, pts.shape[0])
    return weighted_mean(pts[None], w)[0]


def eval_barycenter_cost(points, weights) -> float:
    """Σ λ_i |x_i − B_λ(x)|²."""
    pts = _as_points(points)
    w = _check_weights(weights, pts.shape[0])
    return float(mean_squared_deviation(pts[None], w)[0])


class Barycenter(CostFunction):
    name = "barycenter"

    def __init__(self, weights: Sequence[float]):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.n_marginals = int(self.weights.shape[0])

    @classmethod
    def from_spec(cls, spec: BarycenterSpec) -> "Barycenter":
        return cls(spec.weights)

    def evaluate_many(self, coords: np.ndarray, configs: np.ndarray) -> np.ndarray:
        return mean_squared_deviation(coords, self.weights)
