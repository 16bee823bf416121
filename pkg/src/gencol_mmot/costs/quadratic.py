import numpy as np

from gencol_mmot.errors import ShapeMismatchError
from gencol_mmot.types import QuadraticSpec

from .base import CostFunction


def eval_quadratic_cost(x, y) -> float:
    """|x − y|²."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ShapeMismatchError(f"points have different dimensions: {x.shape} vs {y.shape}")
    diff = x - y
    return float(np.dot(diff, diff))


class Quadratic2M(CostFunction):
    name = "quadratic"
    n_marginals = 2

    @classmethod
    def from_spec(cls, spec: QuadraticSpec) -> "Quadratic2M":
        return cls()

    def evaluate_many(self, coords: np.ndarray, configs: np.ndarray) -> np.ndarray:
        diff = coords[:, 0, :] - coords[:, 1, :]
        return np.einsum("nd,nd->n", diff, diff)
