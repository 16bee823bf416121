"""Cubic spline energies in R^d.

Moments M_j are the second derivatives of the natural cubic spline through
(t_j, x_j). They solve the tridiagonal system

    μ_j M_{j-1} + 2 M_j + λ_j M_{j+1} = d_j,    j = 0..N

with λ_j = h_{j+1}/(h_j + h_{j+1}), μ_j = h_j/(h_j + h_{j+1}),
d_j = 6/(h_j + h_{j+1}) · ((x_{j+1} − x_j)/h_{j+1} − (x_j − x_{j-1})/h_j)
in the interior and λ_0 = d_0 = μ_N = d_N = 0 at the ends, so M_0 = M_N = 0.
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from gencol_mmot.errors import ShapeMismatchError
from gencol_mmot.types import SplineApproxSpec, SplineExactSpec

from .base import CostFunction


def check_times(times) -> np.ndarray:
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    if t.shape[0] < 3:
        raise ValueError(f"a nontrivial spline needs at least 3 knot times, got {t.shape[0]}")
    if not np.all(np.diff(t) > 0):
        raise ValueError(f"knot times must be strictly increasing, got {t.tolist()}")
    return t


def thomas_solve(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system along axis 0 of ``rhs``.

    ``lower[i]`` multiplies x[i-1] and ``upper[i]`` multiplies x[i+1] in row i.
    Trailing axes of ``rhs`` are independent right-hand sides. No pivoting, so
    the matrix must be diagonally dominant.
    """
    n = diag.shape[0]
    c = np.zeros(n)
    d = np.array(rhs, dtype=np.float64, copy=True)
    b = diag[0]
    c[0] = upper[0] / b
    d[0] = d[0] / b
    for i in range(1, n):
        b = diag[i] - lower[i] * c[i - 1]
        if i < n - 1:
            c[i] = upper[i] / b
        d[i] = (d[i] - lower[i] * d[i - 1]) / b
    for i in range(n - 2, -1, -1):
        d[i] = d[i] - c[i] * d[i + 1]
    return d


def _system(times: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    h = np.diff(times)
    n = times.shape[0]
    lower = np.zeros(n)
    upper = np.zeros(n)
    diag = np.full(n, 2.0)
    span = h[:-1] + h[1:]
    upper[1:-1] = h[1:] / span
    lower[1:-1] = h[:-1] / span
    return lower, diag, upper, h


def _rhs(knots: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Right-hand side d_j for knots shaped (N+1, ...)."""
    shape = (-1,) + (1,) * (knots.ndim - 1)
    slopes = np.diff(knots, axis=0) / h.reshape(shape)
    span = (h[:-1] + h[1:]).reshape(shape)
    d = np.zeros_like(knots)
    d[1:-1] = 6.0 / span * (slopes[1:] - slopes[:-1])
    return d


@dataclass(frozen=True, eq=False)
class SplineMoments:
    M: np.ndarray  # (N+1, d)
    h: np.ndarray  # (N,)
    times: np.ndarray

    def residual(self, knots) -> float:
        """‖A·M − d‖_∞ relative to max(1, ‖d‖_∞)."""
        knots = _as_knots(knots)
        lower, diag, upper, h = _system(self.times)
        d = _rhs(knots, h)
        am = diag[:, None] * self.M
        am[1:] += lower[1:, None] * self.M[:-1]
        am[:-1] += upper[:-1, None] * self.M[1:]
        scale = max(1.0, float(np.max(np.abs(d))))
        return float(np.max(np.abs(am - d))) / scale


def _as_knots(knots) -> np.ndarray:
    k = np.asarray(knots, dtype=np.float64)
    if k.ndim == 1:
        k = k.reshape(-1, 1)
    return k


def batch_moments(knots: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Moments for a batch of configurations: (n, N+1, d) knots to (n, N+1, d)."""
    lower, diag, upper, h = _system(times)
    stacked = np.moveaxis(knots, 1, 0)
    moments = thomas_solve(lower, diag, upper, _rhs(stacked, h))
    return np.moveaxis(moments, 0, 1)


def spline_moments(knots, times) -> SplineMoments:
    t = check_times(times)
    k = _as_knots(knots)
    if k.shape[0] != t.shape[0]:
        raise ShapeMismatchError(f"{k.shape[0]} knots for {t.shape[0]} times")
    return SplineMoments(M=batch_moments(k[None], t)[0], h=np.diff(t), times=t)


def moment_energy(moments: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Σ_j (h_j/3)(|M_j|² + M_j·M_{j+1} + |M_{j+1}|²) for (n, N+1, d) moments."""
    a, b = moments[:, :-1, :], moments[:, 1:, :]
    per_interval = np.einsum("njd,njd->nj", a, a) + np.einsum("njd,njd->nj", a, b) + np.einsum("njd,njd->nj", b, b)
    return per_interval @ (h / 3.0)


def eval_spline_cost_exact(knots, times) -> float:
    """∫|ẍ|² dt of the natural cubic spline through the knots."""
    m = spline_moments(knots, times)
    return float(moment_energy(m.M[None], m.h)[0])


def second_difference_energy(knots: np.ndarray, tau: float) -> np.ndarray:
    dd = knots[:, 2:, :] - 2.0 * knots[:, 1:-1, :] + knots[:, :-2, :]
    return np.einsum("njd,njd->n", dd, dd) / tau**3


def eval_spline_cost_approx(knots, step: float) -> float:
    """Σ |x_{i+1} − 2x_i + x_{i−1}|² / τ³."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    k = _as_knots(knots)
    return float(second_difference_energy(k[None], float(step))[0])


def spline_positions(knots: np.ndarray, moments: np.ndarray, times: np.ndarray, t: float) -> np.ndarray:
    """Evaluate natural splines for a batch at one query time.

    ``knots`` and ``moments`` are (n, N+1, d). A query equal to a knot time
    returns the knots themselves.
    """
    if not times[0] <= t <= times[-1]:
        raise ValueError(f"query time {t} outside [{times[0]}, {times[-1]}]")
    hit = np.flatnonzero(times == t)
    if hit.size:
        return knots[:, int(hit[0]), :].copy()
    j = int(np.searchsorted(times, t, side="right")) - 1
    j = min(max(j, 0), times.shape[0] - 2)
    h = times[j + 1] - times[j]
    a = times[j + 1] - t
    b = t - times[j]
    mj, mj1 = moments[:, j, :], moments[:, j + 1, :]
    xj, xj1 = knots[:, j, :], knots[:, j + 1, :]
    return (
        mj * a**3 / (6 * h)
        + mj1 * b**3 / (6 * h)
        + (xj - mj * h**2 / 6) * a / h
        + (xj1 - mj1 * h**2 / 6) * b / h
    )


class SplineExact(CostFunction):
    name = "spline_exact"
    min_marginals = 3

    def __init__(self, times: Sequence[float]):
        self.times = check_times(times)
        self.h = np.diff(self.times)
        self.n_marginals = int(self.times.shape[0])

    @classmethod
    def from_spec(cls, spec: SplineExactSpec) -> "SplineExact":
        return cls(spec.times)

    def evaluate_many(self, coords: np.ndarray, configs: np.ndarray) -> np.ndarray:
        return moment_energy(batch_moments(coords, self.times), self.h)


class SplineApprox(CostFunction):
    name = "spline_approx"
    min_marginals = 3

    def __init__(self, step: float | None = None, times: Sequence[float] | None = None):
        if times is not None:
            t = check_times(times)
            gaps = np.diff(t)
            if gaps.max() - gaps.min() > 1e-12:
                raise ValueError(f"approximate spline cost needs equidistant times, got gaps {gaps.tolist()}")
            self.n_marginals = int(t.shape[0])
            step = float(gaps[0])
        if step is None or not step > 0:
            raise ValueError(f"step must be positive, got {step}")
        self.step = float(step)

    @classmethod
    def from_spec(cls, spec: SplineApproxSpec) -> "SplineApprox":
        return cls(step=spec.step, times=spec.times)

    def evaluate_many(self, coords: np.ndarray, configs: np.ndarray) -> np.ndarray:
        return second_difference_energy(coords, self.step)
