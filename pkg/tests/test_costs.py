import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from gencol_mmot.costs import (
    COST_REGISTRY,
    CostEvaluator,
    Custom,
    Quadratic2M,
    barycenter_map,
    eval_barycenter_cost,
    eval_cost,
    eval_quadratic_cost,
    eval_spline_cost_approx,
    eval_spline_cost_exact,
    get_cost,
    spline_moments,
    thomas_solve,
)
from gencol_mmot.costs.spline import SplineApprox, batch_moments, spline_positions
from gencol_mmot.errors import ShapeMismatchError
from gencol_mmot.instances import reflected_pair
from gencol_mmot.measures import Marginal
from gencol_mmot.types import (
    BarycenterSpec,
    CustomSpec,
    QuadraticSpec,
    SplineApproxSpec,
    SplineExactSpec,
)


class TestBarycenterCost:
    def test_equal_points(self):
        assert eval_barycenter_cost([[1.0, 2.0]] * 3, [0.2, 0.3, 0.5]) == 0.0

    def test_two_points(self):
        assert barycenter_map([[0.0], [1.0]], [0.5, 0.5]).tolist() == [0.5]
        assert eval_barycenter_cost([[0.0], [1.0]], [0.5, 0.5]) == pytest.approx(0.25)

    def test_three_points(self):
        w = [1 / 3, 1 / 3, 1 / 3]
        assert barycenter_map([0.0, 0.0, 3.0], w)[0] == pytest.approx(1.0)
        assert eval_barycenter_cost([0.0, 0.0, 3.0], w) == pytest.approx(2.0)

    def test_map_examples(self):
        assert_allclose(barycenter_map([[0.0, 0.0], [2.0, 4.0]], [0.5, 0.5]), [1.0, 2.0])
        assert_allclose(barycenter_map([[0.0], [4.0]], [0.25, 0.75]), [3.0])

    def test_weight_count_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            eval_barycenter_cost([0.0, 1.0], [1.0])


class TestSplineMoments:
    def test_hat_knots(self):
        m = spline_moments([0.0, 1.0, 0.0], [0.0, 0.5, 1.0])
        assert_allclose(m.M[:, 0], [0.0, -12.0, 0.0], atol=1e-12)
        assert m.residual([0.0, 1.0, 0.0]) <= 1e-10

    def test_collinear_knots(self):
        m = spline_moments([[0.0, 1.0], [1.0, 3.0], [2.0, 5.0], [3.0, 7.0]], [0.0, 1 / 3, 2 / 3, 1.0])
        assert_allclose(m.M, 0.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_residual_small(self, seed):
        rng = np.random.default_rng(seed)
        times = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0.05, 0.95, size=3)]))
        knots = rng.normal(size=(5, 2))
        assert spline_moments(knots, times).residual(knots) <= 1e-10

    def test_matches_natural_cubic_spline(self, rng):
        times = np.array([0.0, 0.2, 0.5, 0.6, 1.0])
        knots = rng.normal(size=5)
        reference = CubicSpline(times, knots, bc_type="natural")
        assert_allclose(spline_moments(knots, times).M[:, 0], reference(times, 2), atol=1e-10)

    def test_times_must_increase(self):
        with pytest.raises(ValueError):
            spline_moments([0.0, 1.0, 2.0], [0.0, 0.5, 0.5])

    def test_knot_count_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            spline_moments([0.0, 1.0], [0.0, 0.5, 1.0])

    def test_thomas_against_dense(self, rng):
        n = 6
        lower = np.concatenate([[0.0], rng.uniform(0.1, 0.9, n - 1)])
        upper = np.concatenate([rng.uniform(0.1, 0.9, n - 1), [0.0]])
        diag = np.full(n, 2.0)
        rhs = rng.normal(size=(n, 3))
        dense = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
        assert_allclose(thomas_solve(lower, diag, upper, rhs), np.linalg.solve(dense, rhs), atol=1e-12)


class TestSplineEnergy:
    def test_hat_exact(self):
        assert eval_spline_cost_exact([0.0, 1.0, 0.0], [0.0, 0.5, 1.0]) == pytest.approx(48.0)

    def test_hat_approx(self):
        assert eval_spline_cost_approx([0.0, 1.0, 0.0], 0.5) == pytest.approx(32.0)

    def test_straight_lines(self):
        knots = np.array([[1.0, -1.0], [1.5, 0.0], [2.0, 1.0], [2.5, 2.0]])
        assert eval_spline_cost_exact(knots, [0.0, 1 / 3, 2 / 3, 1.0]) == pytest.approx(0.0, abs=1e-20)
        assert eval_spline_cost_approx(knots, 1 / 3) == pytest.approx(0.0, abs=1e-20)

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError):
            eval_spline_cost_approx([0.0, 1.0, 0.0], 0.0)

    def test_approx_needs_equidistant_times(self):
        assert SplineApprox(times=(0.0, 0.25, 0.5, 0.75, 1.0)).step == pytest.approx(0.25)
        with pytest.raises(ValueError, match="equidistant"):
            SplineApprox(times=(0.0, 0.3, 0.6, 1.0))

    @pytest.mark.parametrize("seed", range(100))
    def test_closed_form_matches_quadrature(self, seed):
        rng = np.random.default_rng(seed)
        times = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0.1, 0.9, size=2)]))
        if np.min(np.diff(times)) < 0.02:
            times = np.array([0.0, 0.3, 0.7, 1.0])
        knots = rng.normal(size=(4, 2))
        spline = CubicSpline(times, knots, bc_type="natural")
        total = 0.0
        for a, b in zip(times[:-1], times[1:]):
            t = np.linspace(a, b, 201)
            total += simpson(np.sum(spline(t, 2) ** 2, axis=1), x=t)
        assert eval_spline_cost_exact(knots, times) == pytest.approx(total, rel=1e-8)

    def test_batch_matches_scalar(self, rng):
        times = np.array([0.0, 0.25, 0.5, 1.0])
        knots = rng.normal(size=(7, 4, 2))
        moments = batch_moments(knots, times)
        for n in range(7):
            assert_allclose(moments[n], spline_moments(knots[n], times).M, atol=1e-12)


def test_spline_positions_at_knots_are_exact(rng):
    times = np.array([0.0, 0.4, 1.0])
    knots = rng.normal(size=(3, 3, 2))
    moments = batch_moments(knots, times)
    for j, t in enumerate(times):
        assert np.array_equal(spline_positions(knots, moments, times, float(t)), knots[:, j, :])
    with pytest.raises(ValueError):
        spline_positions(knots, moments, times, 1.5)


class TestQuadratic:
    def test_values(self):
        assert eval_quadratic_cost([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert eval_quadratic_cost([0.0, 0.0], [3.0, 4.0]) == pytest.approx(25.0)
        assert eval_quadratic_cost(0.2, 0.5) == pytest.approx(0.09)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            eval_quadratic_cost([0.0, 0.0], [1.0])

    def test_reflected_grid(self):
        first, second = reflected_pair(100)
        evaluator = CostEvaluator(Quadratic2M(), [first, second])
        x = first.points[:, 0]
        for i in (0, 17, 50, 99):
            assert evaluator((i, 99 - i)) == pytest.approx((x[i] - x[99 - i]) ** 2)

    def test_needs_two_marginals(self, halves):
        with pytest.raises(ShapeMismatchError):
            CostEvaluator(Quadratic2M(), [halves, halves, halves])


class TestRegistry:
    def test_kinds(self):
        assert set(COST_REGISTRY) == {"quadratic", "barycenter", "spline_exact", "spline_approx", "custom"}

    def test_get_cost_by_name(self):
        cost = get_cost("barycenter", weights=(0.5, 0.5))
        assert cost.name == "barycenter"
        assert cost.n_marginals == 2

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="Unknown cost kind"):
            get_cost("wasserstein")

    def test_eval_cost_barycenter_identical(self):
        m = Marginal([[0.3, 0.4]], [1.0])
        assert eval_cost(BarycenterSpec(weights=(0.5, 0.5)), (0, 0), [m, m]) == 0.0

    def test_spline_approx_on_line_is_zero(self):
        diracs = [Marginal.dirac([0.1 * k, 1.0 - 0.2 * k]) for k in range(4)]
        spec = SplineApproxSpec(times=(0.0, 1 / 3, 2 / 3, 1.0))
        assert eval_cost(spec, (0, 0, 0, 0), diracs) == pytest.approx(0.0, abs=1e-12)

    def test_spline_exact_matches_function(self):
        diracs = [Marginal.dirac(v) for v in (0.0, 1.0, 0.0)]
        spec = SplineExactSpec(times=(0.0, 0.5, 1.0))
        assert eval_cost(spec, (0, 0, 0), diracs) == pytest.approx(48.0)

    def test_quadratic_spec(self, halves):
        assert eval_cost(QuadraticSpec(), (0, 1), [halves, halves]) == pytest.approx(1.0)


class TestCustom:
    def test_by_index(self, halves):
        table = np.array([[0.0, 2.0], [3.0, 1.0]])
        spec = CustomSpec(callback=lambda r: table[r], by_index=True)
        assert eval_cost(spec, (1, 0), [halves, halves]) == 3.0

    def test_coordinates(self, halves):
        spec = CustomSpec(callback=lambda x: float(np.abs(x[0] - x[1]).sum()))
        assert eval_cost(spec, (0, 1), [halves, halves]) == 1.0

    def test_non_finite_rejected(self, halves):
        cost = Custom(lambda r: float("nan"), by_index=True)
        with pytest.raises(ValueError):
            CostEvaluator(cost, [halves, halves])((0, 0))


class TestEvaluator:
    def test_cache_bounded(self, halves):
        calls = []

        def callback(r):
            calls.append(r)
            return 1.0

        evaluator = CostEvaluator(Custom(callback, by_index=True), [halves, halves], cache_size=2)
        evaluator((0, 0))
        evaluator((0, 0))
        assert len(calls) == 1
        evaluator((0, 1))
        evaluator((1, 1))
        evaluator((0, 0))
        assert len(calls) == 4
        assert evaluator.cache_info().maxsize == 2

    def test_many_matches_scalar(self, rng):
        marginals = [Marginal(rng.normal(size=(4, 2)), np.full(4, 0.25)) for _ in range(3)]
        evaluator = CostEvaluator(get_cost(BarycenterSpec(weights=(0.2, 0.3, 0.5))), marginals)
        configs = rng.integers(0, 4, size=(10, 3))
        assert_allclose(evaluator.many(configs), [evaluator(tuple(r)) for r in configs.tolist()], rtol=1e-14)

    def test_common_dimension_required(self):
        a = Marginal([[0.0, 0.0]], [1.0])
        b = Marginal([0.0], [1.0])
        with pytest.raises(ShapeMismatchError):
            CostEvaluator(Quadratic2M(), [a, b])
