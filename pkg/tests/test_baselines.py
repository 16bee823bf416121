import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from gencol_mmot.baselines import common_support, epsilon_schedule, ibp_barycenter, sinkhorn_2m
from gencol_mmot.errors import NumericalUnderflowError, ShapeMismatchError
from gencol_mmot.instances import monotone_coupling_cost, reflected_pair
from gencol_mmot.measures import Marginal
from gencol_mmot.types import SinkhornParams


def _far_pair() -> tuple[Marginal, Marginal]:
    return Marginal([0.0, 0.1], [0.5, 0.5]), Marginal([0.9, 1.0], [0.5, 0.5])


class TestSinkhorn:
    def test_diracs(self):
        result = sinkhorn_2m(Marginal.dirac(0.0), Marginal.dirac(2.0), SinkhornParams(epsilon=0.1))
        assert result.converged
        assert_allclose(result.plan, [[1.0]])
        assert result.cost == pytest.approx(4.0)

    def test_small_regularization_approaches_exact_cost(self):
        a, b = _far_pair()
        result = sinkhorn_2m(a, b, SinkhornParams(epsilon=1e-4, scale_by_diameter=False, epsilon_scaling=True))
        assert result.converged
        assert result.cost == pytest.approx(0.81, abs=1e-6)
        assert_allclose(result.plan.sum(axis=0), b.masses, atol=1e-8)

    def test_epsilon_scaling_beats_cold_start(self):
        a, b = _far_pair()
        cold = sinkhorn_2m(a, b, SinkhornParams(epsilon=1e-4, scale_by_diameter=False, max_iter=2000))
        warm = sinkhorn_2m(
            a, b, SinkhornParams(epsilon=1e-4, scale_by_diameter=False, max_iter=2000, epsilon_scaling=True)
        )
        assert not cold.converged
        assert cold.errors[:3] == pytest.approx([0.5, 0.25, 1 / 6], rel=1e-3)
        assert warm.converged
        assert len(warm.errors) < len(cold.errors)

    def test_errors_never_increase(self):
        a, b = reflected_pair(30)
        result = sinkhorn_2m(a, b, SinkhornParams(epsilon=0.05, tol=1e-12))
        assert result.converged
        assert len(result.errors) == result.iterations
        assert all(y <= x * (1 + 1e-12) + 1e-14 for x, y in zip(result.errors, result.errors[1:]))

    def test_cost_decreases_toward_exact_as_epsilon_shrinks(self):
        a, b = reflected_pair(40)
        exact = monotone_coupling_cost(a, b)
        results = [sinkhorn_2m(a, b, SinkhornParams(epsilon=eps, max_iter=20_000)) for eps in (1e-1, 3e-2, 1e-2)]
        assert all(r.converged for r in results)
        costs = [r.cost for r in results]
        assert all(y <= x + 1e-9 for x, y in zip(costs, costs[1:]))
        assert all(cost >= exact - 1e-7 for cost in costs)

    def test_plain_kernel_underflows(self):
        a, b = _far_pair()
        params = SinkhornParams(epsilon=1e-4, scale_by_diameter=False, log_domain=False)
        with pytest.raises(NumericalUnderflowError):
            sinkhorn_2m(a, b, params)

    def test_plain_matches_log_domain(self):
        a, b = reflected_pair(20)
        log = sinkhorn_2m(a, b, SinkhornParams(epsilon=0.05))
        plain = sinkhorn_2m(a, b, SinkhornParams(epsilon=0.05, log_domain=False))
        assert plain.cost == pytest.approx(log.cost, rel=1e-6)

    def test_sweep_reaches_exact_cost(self):
        a, b = reflected_pair(100)
        exact = monotone_coupling_cost(a, b)
        errors = [
            abs(sinkhorn_2m(a, b, SinkhornParams(epsilon=eps, max_iter=1000)).cost - exact)
            for eps in (1e-2, 3e-3, 1e-3)
        ]
        assert min(errors) <= 2e-3

    def test_not_converged_warns(self, caplog):
        a, b = reflected_pair(30)
        with caplog.at_level(logging.WARNING, logger="gencol_mmot.baselines"):
            result = sinkhorn_2m(a, b, SinkhornParams(epsilon=1e-3, max_iter=2, tol=1e-12))
        assert not result.converged
        assert result.iterations == 2
        assert "did not converge" in caplog.text

    def test_explicit_cost(self, halves):
        cost = np.array([[0.0, 1.0], [1.0, 0.0]])
        result = sinkhorn_2m(halves, halves, SinkhornParams(epsilon=1e-3, scale_by_diameter=False), cost=cost)
        assert result.cost == pytest.approx(0.0, abs=1e-6)
        with pytest.raises(ShapeMismatchError):
            sinkhorn_2m(halves, halves, SinkhornParams(epsilon=0.1), cost=np.zeros((2, 3)))

    def test_dimension_mismatch(self, halves):
        with pytest.raises(ShapeMismatchError):
            sinkhorn_2m(halves, Marginal.dirac([0.0, 0.0]), SinkhornParams(epsilon=0.1))


def test_common_support_histograms():
    a = Marginal([0.0, 1.0], [0.25, 0.75])
    b = Marginal([1.0, 2.0], [0.5, 0.5])
    points, hists = common_support([a, b])
    assert points[:, 0].tolist() == [0.0, 1.0, 2.0]
    assert hists.tolist() == [[0.25, 0.75, 0.0], [0.0, 0.5, 0.5]]


class TestIBP:
    def test_symmetric_diracs_meet_in_the_middle(self):
        points = np.linspace(0.0, 1.0, 11)
        hists = np.zeros((2, 11))
        hists[0, 0] = 1.0
        hists[1, -1] = 1.0
        result = ibp_barycenter(points, hists, [0.5, 0.5], SinkhornParams(epsilon=5e-3, max_iter=2000, tol=1e-9))
        assert result.masses.sum() == pytest.approx(1.0)
        assert result.points[int(np.argmax(result.masses)), 0] == pytest.approx(0.5)
        assert_allclose(result.masses, result.masses[::-1], atol=1e-8)

    def test_shapes(self):
        with pytest.raises(ShapeMismatchError):
            ibp_barycenter(np.zeros(3), np.ones((2, 4)) / 4, [0.5, 0.5], SinkhornParams(epsilon=0.1))
        with pytest.raises(ShapeMismatchError):
            ibp_barycenter(np.zeros(4), np.ones((2, 4)) / 4, [1.0], SinkhornParams(epsilon=0.1))


def test_epsilon_schedule():
    stages = epsilon_schedule(1.0, 1e-4)
    assert stages[0] == 1.0
    assert all(y < x for x, y in zip(stages, stages[1:]))
    assert all(s > 1e-4 for s in stages)
    assert (stages[-1] - 1e-4) * np.exp(-1) <= 1e-3 * 1e-4 * (1 + 1e-9)
    assert epsilon_schedule(1e-4 * 1.0005, 1e-4) == []


@pytest.mark.parametrize(
    "overrides",
    [{"epsilon_start": 0.05}, {"log_domain": False}],
)
def test_epsilon_scaling_options_are_checked(overrides):
    with pytest.raises(ValidationError):
        SinkhornParams(epsilon=0.1, epsilon_scaling=True, **overrides)
