from __future__ import annotations

from collections.abc import Sequence
from functools import lru_cache

import numpy as np

from gencol_mmot.errors import ShapeMismatchError
from gencol_mmot.measures import Configuration, Marginal, shape_of


class CostFunction:
    """A cost c(r) evaluated from the coordinates of a configuration.

    Subclasses implement ``evaluate_many`` on an (n, N, d) coordinate batch;
    the scalar path goes through the same arithmetic with n = 1.
    """

    name: str = "cost"
    n_marginals: int | None = None
    min_marginals: int = 2
    needs_coordinates: bool = True

    def evaluate_many(self, coords: np.ndarray, configs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, coords: np.ndarray, config: Configuration) -> float:
        return float(self.evaluate_many(coords[None], np.asarray(config, dtype=np.int64)[None])[0])

    def check(self, marginals: Sequence[Marginal]) -> None:
        n = len(marginals)
        if self.n_marginals is not None and n != self.n_marginals:
            raise ShapeMismatchError(f"{self.name} cost needs {self.n_marginals} marginals, got {n}")
        if n < self.min_marginals:
            raise ShapeMismatchError(f"{self.name} cost needs at least {self.min_marginals} marginals, got {n}")
        if self.needs_coordinates:
            dims = {m.dim for m in marginals}
            if len(dims) > 1:
                raise ShapeMismatchError(f"{self.name} cost needs a common dimension, got {sorted(dims)}")


class CostEvaluator:
    """Lazy cost lookup bound to a fixed list of marginals.

    Scalar lookups are memoized in a bounded LRU map (``cache_size`` = 0
    disables it); batch lookups through ``many`` are not cached.
    """

    def __init__(self, cost: CostFunction, marginals: Sequence[Marginal], cache_size: int = 0):
        cost.check(marginals)
        self.cost = cost
        self.marginals = tuple(marginals)
        self.shape = shape_of(self.marginals)
        self._points = [m.points for m in self.marginals]
        self._uniform = len({m.dim for m in self.marginals}) == 1
        self.cache_size = int(cache_size)
        if self.cache_size > 0:
            self._lookup = lru_cache(maxsize=self.cache_size)(self._evaluate)
        else:
            self._lookup = self._evaluate

    def _evaluate(self, r: Configuration) -> float:
        return self.cost.evaluate(self.coordinates(r), r)

    def coordinates(self, r: Configuration) -> np.ndarray:
        if not self._uniform:
            return np.empty((len(r), 0))
        return np.stack([self._points[k][i] for k, i in enumerate(r)])

    def gather(self, configs: np.ndarray) -> np.ndarray:
        """(n, N) index array to (n, N, d) coordinates."""
        if not self._uniform:
            return np.empty((configs.shape[0], configs.shape[1], 0))
        return np.stack([self._points[k][configs[:, k]] for k in range(len(self._points))], axis=1)

    def __call__(self, r: Configuration) -> float:
        return self._lookup(tuple(int(i) for i in r))

    def many(self, configs: np.ndarray) -> np.ndarray:
        configs = np.asarray(configs, dtype=np.int64).reshape(-1, len(self.shape))
        if configs.shape[0] == 0:
            return np.zeros(0)
        return np.asarray(self.cost.evaluate_many(self.gather(configs), configs), dtype=np.float64)

    def cache_info(self):
        if self.cache_size > 0:
            return self._lookup.cache_info()
        return None
