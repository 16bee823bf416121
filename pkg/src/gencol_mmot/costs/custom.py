import math
from collections.abc import Callable
from typing import Any

import numpy as np

from gencol_mmot.measures import Configuration
from gencol_mmot.types import CustomSpec

from .base import CostFunction


class Custom(CostFunction):
    """Wraps a user callback. The callback sees the (N, d) coordinates of a
    configuration, or the index tuple when ``by_index`` is set."""

    def __init__(self, callback: Callable[[Any], float], by_index: bool = False, name: str = "custom"):
        self.callback = callback
        self.by_index = by_index
        self.needs_coordinates = not by_index
        self.name = name

    @classmethod
    def from_spec(cls, spec: CustomSpec) -> "Custom":
        return cls(spec.callback, by_index=spec.by_index, name=spec.name)

    def evaluate(self, coords: np.ndarray, config: Configuration) -> float:
        arg = tuple(int(i) for i in config) if self.by_index else coords
        value = float(self.callback(arg))
        if not math.isfinite(value):
            raise ValueError(f"{self.name} cost returned {value!r} at {tuple(config)}")
        return value

    def evaluate_many(self, coords: np.ndarray, configs: np.ndarray) -> np.ndarray:
        return np.array(
            [self.evaluate(coords[n], configs[n]) for n in range(configs.shape[0])],
            dtype=np.float64,
        )
