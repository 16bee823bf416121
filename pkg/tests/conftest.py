import numpy as np
import pytest

from gencol_mmot.costs import CostEvaluator, get_cost
from gencol_mmot.instances import random_cost_table, random_family, table_cost
from gencol_mmot.lp import solve_full_product
from gencol_mmot.measures import Marginal, shape_of


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def halves():
    """Two points 0 and 1 carrying mass ½ each."""
    return Marginal([0.0, 1.0], [0.5, 0.5], label="halves")


@pytest.fixture
def brute_force():
    """Objective of the full-product LP solved by HiGHS."""

    def solve(marginals, spec) -> float:
        result = solve_full_product(CostEvaluator(get_cost(spec), marginals))
        assert result.status == "optimal"
        return result.objective

    return solve


@pytest.fixture
def random_table_instance():
    """Random marginals on the line with a random dense cost tensor."""

    def build(seed: int, sizes):
        rng = np.random.default_rng(seed)
        marginals = random_family(rng, sizes)
        return marginals, table_cost(random_cost_table(rng, shape_of(marginals)))

    return build
