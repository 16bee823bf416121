import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.interpolate import CubicSpline

from gencol_mmot.engine import certify, run
from gencol_mmot.errors import ShapeMismatchError
from gencol_mmot.extract import (
    GridSpec,
    WeightedPointCloud,
    barycenter_pushforward,
    merge_points,
    rasterize,
    smooth_threshold,
    spline_path,
)
from gencol_mmot.init import nw_corner
from gencol_mmot.instances import (
    gaussian_series_1d,
    gaussian_series_2d,
    random_family,
    random_marginal,
    translated_copies,
)
from gencol_mmot.measures import Marginal, SparsePlan, shape_of, sparsity_bound
from gencol_mmot.types import BarycenterSpec, GenColConfig, SplineApproxSpec, SplineExactSpec


def _sorted(points, masses):
    cloud = merge_points(points, masses)
    return cloud.points, cloud.masses


def _assert_frame_is_marginal(cloud, marginal):
    """``cloud`` sits on the 1-D grid of ``marginal`` and carries its masses."""
    index = np.searchsorted(marginal.points[:, 0], cloud.points[:, 0])
    assert np.array_equal(marginal.points[index, 0], cloud.points[:, 0])
    dense = np.zeros(marginal.size)
    np.add.at(dense, index, cloud.masses)
    assert_allclose(dense, marginal.masses, atol=1e-9)


class TestBarycenterPushforward:
    def test_unit_weight_recovers_first_marginal(self, rng):
        marginals = random_family(rng, [6, 4, 5], dim=2)
        plan = nw_corner(marginals).plan
        cloud = barycenter_pushforward(plan, marginals, [1.0, 0.0, 0.0])
        points, masses = _sorted(marginals[0].points, marginals[0].masses)
        assert np.array_equal(cloud.points, points)
        assert_allclose(cloud.masses, masses, atol=1e-12)

    def test_diracs(self):
        diracs = [Marginal.dirac([0.0, 0.0]), Marginal.dirac([2.0, 4.0])]
        cloud = barycenter_pushforward(SparsePlan({(0, 0): 1.0}, (1, 1)), diracs, [0.5, 0.5])
        assert cloud.points.tolist() == [[1.0, 2.0]]
        assert cloud.masses.tolist() == [1.0]

    def test_translated_copies(self, rng):
        base = random_marginal(rng, 20, dim=2, label="base")
        shifts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0]])
        marginals = translated_copies(base, shifts)
        weights = (0.25, 0.25, 0.25, 0.25)
        state = run(marginals, BarycenterSpec(weights=weights), GenColConfig(seed=1, max_stall=2000))

        mean_shift = shifts.mean(axis=0)
        expected = float(np.mean(np.sum((shifts - mean_shift) ** 2, axis=1)))
        assert state.objective == pytest.approx(expected, rel=1e-10)

        cloud = barycenter_pushforward(state.plan, marginals, weights)
        points, masses = _sorted(base.points + mean_shift, base.masses)
        assert_allclose(cloud.points, points, atol=1e-12)
        assert_allclose(cloud.masses, masses, atol=1e-12)
        assert cloud.total_mass == pytest.approx(1.0)

    def test_gaussians_on_a_pixel_grid(self):
        marginals = gaussian_series_2d(n_marginals=3, width=8)
        weights = (0.5, 0.25, 0.25)
        state = run(marginals, BarycenterSpec(weights=weights), GenColConfig(seed=4))
        assert certify(state).exact_optimum
        assert len(state.plan) <= sparsity_bound(shape_of(marginals))

        cloud = barycenter_pushforward(state.plan, marginals, weights)
        means = np.array([m.masses @ m.points for m in marginals])
        assert_allclose(cloud.masses @ cloud.points, np.asarray(weights) @ means, atol=1e-9)
        assert cloud.size <= len(state.plan)

    def test_weight_count(self, halves):
        plan = SparsePlan({(0, 0): 0.5, (1, 1): 0.5}, (2, 2))
        with pytest.raises(ShapeMismatchError):
            barycenter_pushforward(plan, [halves, halves], [1.0])

    def test_plan_shape(self, halves):
        plan = SparsePlan({(0, 0): 1.0}, (1, 2))
        with pytest.raises(ShapeMismatchError):
            barycenter_pushforward(plan, [halves, halves], [0.5, 0.5])


def test_merge_points_sums_coincident_mass():
    cloud = merge_points(np.array([[1.0], [0.0], [1.0 + 1e-14], [0.5]]), np.array([0.1, 0.2, 0.3, 0.4]))
    assert cloud.points[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert_allclose(cloud.masses, [0.2, 0.4, 0.4])


class TestSplinePath:
    def test_diracs_follow_natural_spline(self):
        times = (0.0, 0.3, 0.6, 1.0)
        knots = np.array([[0.0, 0.0], [1.0, 0.5], [0.5, 1.5], [2.0, 1.0]])
        diracs = [Marginal.dirac(k) for k in knots]
        plan = SparsePlan({(0, 0, 0, 0): 1.0}, (1, 1, 1, 1))
        query = np.linspace(0.0, 1.0, 100)
        path = spline_path(plan, diracs, times, query)
        reference = CubicSpline(times, knots, bc_type="natural")
        for t, cloud in path:
            assert cloud.size == 1
            assert_allclose(cloud.points[0], reference(t), atol=1e-12)

    def test_knot_times_return_marginals(self, rng):
        marginals = random_family(rng, [5, 3, 4], dim=2)
        plan = nw_corner(marginals).plan
        times = (0.0, 0.5, 1.0)
        path = spline_path(plan, marginals, times, times)
        for (t, cloud), m in zip(path, marginals):
            points, masses = _sorted(m.points, m.masses)
            assert np.array_equal(cloud.points, points)
            assert_allclose(cloud.masses, masses, atol=1e-12)

    @pytest.mark.parametrize("spec_type", [SplineExactSpec, SplineApproxSpec])
    def test_gaussian_series_frames(self, spec_type):
        marginals = gaussian_series_1d(n_marginals=4, n_points=21)
        times = tuple(float(t) for t in np.linspace(0.0, 1.0, 4))
        state = run(marginals, spec_type(times=times), GenColConfig(seed=3))
        assert certify(state).exact_optimum
        assert len(state.plan) <= sparsity_bound(shape_of(marginals))

        path = spline_path(state.plan, marginals, times, (*times, 0.5))
        for (_, cloud), m in zip(path, marginals):
            _assert_frame_is_marginal(cloud, m)
        assert path.clouds[-1].total_mass == pytest.approx(1.0)

    @pytest.mark.slow
    def test_six_gaussians_on_101_points(self):
        marginals = gaussian_series_1d()
        times = tuple(float(t) for t in np.linspace(0.0, 1.0, 6))
        state = run(marginals, SplineExactSpec(times=times), GenColConfig(seed=0))
        assert len(state.plan) <= sparsity_bound(shape_of(marginals))
        path = spline_path(state.plan, marginals, times, times)
        for (_, cloud), m in zip(path, marginals):
            _assert_frame_is_marginal(cloud, m)

    def test_query_outside_unit_interval(self, halves):
        plan = SparsePlan({(0, 0, 0): 0.5, (1, 1, 1): 0.5}, (2, 2, 2))
        with pytest.raises(ValueError, match="outside"):
            spline_path(plan, [halves] * 3, (0.0, 0.5, 1.0), [1.2])

    def test_times_per_marginal(self, halves):
        plan = SparsePlan({(0, 0, 0): 0.5, (1, 1, 1): 0.5}, (2, 2, 2))
        with pytest.raises(ShapeMismatchError):
            spline_path(plan, [halves] * 3, (0.0, 0.25, 0.5, 1.0), [0.5])


class TestGrid:
    def test_pixel_grid_contains_centers(self):
        grid = GridSpec.for_pixels(28, 28, refinement=2)
        assert grid.shape == (55, 55)
        assert grid.centers(0)[0] == pytest.approx(0.5 / 28)
        assert grid.centers(0)[-1] == pytest.approx(27.5 / 28)
        assert grid.centers(1)[2] == pytest.approx(1.5 / 28)

    def test_interval(self):
        grid = GridSpec.for_interval(4)
        assert_allclose(grid.centers(0), [0.125, 0.375, 0.625, 0.875])


class TestRasterize:
    def test_nearest_on_nodes(self):
        grid = GridSpec.for_interval(4)
        cloud = WeightedPointCloud(np.array([[0.125], [0.625], [0.625]]), np.array([0.5, 0.25, 0.25]))
        assert rasterize(cloud, grid).tolist() == [0.5, 0.0, 0.5, 0.0]

    def test_nearest_tie_goes_low(self):
        grid = GridSpec.for_interval(4)
        cloud = WeightedPointCloud(np.array([[0.25]]), np.array([1.0]))
        assert rasterize(cloud, grid).tolist() == [1.0, 0.0, 0.0, 0.0]

    def test_bilinear_splits_mass(self):
        grid = GridSpec.for_pixels(2, 2)
        cloud = WeightedPointCloud(np.array([[0.5, 0.5], [0.25, 0.75]]), np.array([0.8, 0.2]))
        out = rasterize(cloud, grid, method="bilinear")
        assert_allclose(out, [[0.2, 0.4], [0.2, 0.2]])
        assert out.sum() == pytest.approx(1.0)

    def test_outside_grid(self):
        grid = GridSpec.for_interval(4)
        cloud = WeightedPointCloud(np.array([[1.5]]), np.array([1.0]))
        with pytest.raises(ValueError, match="outside the grid"):
            rasterize(cloud, grid)
        with pytest.raises(ValueError, match="outside the grid"):
            rasterize(cloud, grid, method="bilinear")

    def test_dimension_and_method(self):
        cloud = WeightedPointCloud(np.array([[0.5, 0.5]]), np.array([1.0]))
        with pytest.raises(ShapeMismatchError):
            rasterize(cloud, GridSpec.for_interval(4))
        with pytest.raises(ValueError, match="Unknown rasterization method"):
            rasterize(cloud, GridSpec.for_pixels(2, 2), method="cubic")


class TestSmoothThreshold:
    def test_spike(self):
        grid = np.zeros((21, 21))
        grid[10, 10] = 1.0
        mask = smooth_threshold(grid, sigma=2.0, level=0.01)
        assert mask[10, 10]
        assert mask[10, 12]
        assert not mask[0, 0]
        assert mask.dtype == bool

    def test_zero_sigma_is_plain_threshold(self):
        grid = np.array([[0.0, 0.2], [0.5, 0.1]])
        assert smooth_threshold(grid, 0.0, 0.15).tolist() == [[False, True], [True, False]]

    def test_arguments(self):
        with pytest.raises(ValueError):
            smooth_threshold(np.zeros((2, 2)), -1.0, 0.1)
        with pytest.raises(ValueError):
            smooth_threshold(np.zeros((2, 2)), 1.0, 0.0)
