"""Entropic baselines: two-marginal Sinkhorn and the fixed-support IBP barycenter."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from gencol_mmot.errors import NumericalUnderflowError, ShapeMismatchError
from gencol_mmot.measures import Marginal
from gencol_mmot.types import SinkhornParams

logger = logging.getLogger(__name__)


@dataclass
class SinkhornResult:
    log_u: np.ndarray
    log_v: np.ndarray
    plan: np.ndarray
    cost: float
    iterations: int
    marginal_error: float
    converged: bool
    reg: float
    errors: list[float] = field(default_factory=list)


@dataclass
class BarycenterResult:
    points: np.ndarray
    masses: np.ndarray
    iterations: int
    error: float
    converged: bool
    reg: float


def squared_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return cdist(x, y, metric="sqeuclidean")


def _diameter_sq(*point_sets: np.ndarray) -> float:
    pts = np.concatenate(point_sets, axis=0)
    span = pts.max(axis=0) - pts.min(axis=0)
    return float(np.dot(span, span)) or 1.0


def _regularization(params: SinkhornParams, *point_sets: np.ndarray, epsilon: float | None = None) -> float:
    epsilon = params.epsilon if epsilon is None else epsilon
    if params.scale_by_diameter:
        return epsilon * _diameter_sq(*point_sets)
    return epsilon


def sinkhorn_2m(
    mu1: Marginal,
    mu2: Marginal,
    params: SinkhornParams,
    cost: np.ndarray | None = None,
) -> SinkhornResult:
    """Entropic OT between two marginals by alternating scalings.

    ``cost`` defaults to squared Euclidean distances between the supports.
    ``epsilon`` is in units of the squared diameter of both supports unless
    ``scale_by_diameter`` is off. With ``epsilon_scaling`` the log-domain
    iterations are warm-started through a decreasing sequence of
    regularizations.
    """
    if mu1.dim != mu2.dim and cost is None:
        raise ShapeMismatchError(f"supports live in R^{mu1.dim} and R^{mu2.dim}")
    c = squared_distances(mu1.points, mu2.points) if cost is None else np.asarray(cost, dtype=np.float64)
    if c.shape != (mu1.size, mu2.size):
        raise ShapeMismatchError(f"cost matrix {c.shape} does not match marginals ({mu1.size}, {mu2.size})")
    reg = _regularization(params, mu1.points, mu2.points)
    a, b = np.asarray(mu1.masses), np.asarray(mu2.masses)

    if params.log_domain:
        reg_start = None
        if params.epsilon_scaling:
            reg_start = _regularization(params, mu1.points, mu2.points, epsilon=params.epsilon_start)
        return _sinkhorn_log(a, b, c, reg, params, reg_start)
    return _sinkhorn_plain(a, b, c, reg, params)


def _sinkhorn_log(a, b, c, reg, params: SinkhornParams, reg_start: float | None = None) -> SinkhornResult:
    # potentials carried between stages in cost units
    big_f = np.zeros(a.shape[0])
    big_g = np.zeros(b.shape[0])
    spent = 0
    if reg_start is not None:
        for reg_i in epsilon_schedule(reg_start, reg):
            f, g, it, _, _ = _log_iterations(a, b, -c / reg_i, big_f / reg_i, big_g / reg_i, params.stage_iter, params.tol, 1)
            big_f, big_g = reg_i * f, reg_i * g
            spent += it
        logger.debug("epsilon scaling from %.3e to %.3e took %d iterations", reg_start, reg, spent)
    mr = -c / reg
    f, g, it, err, errors = _log_iterations(a, b, mr, big_f / reg, big_g / reg, params.max_iter, params.tol, params.check_every)
    plan = np.exp(mr + f[:, None] + g[None, :])
    return _finish(f, g, plan, c, spent + it, err, errors, reg, params)


def _log_iterations(a, b, mr, f, g, max_iter: int, tol: float, check_every: int):
    log_a, log_b = np.log(a), np.log(b)
    errors: list[float] = []
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f = log_a - logsumexp(mr + g[None, :], axis=1)
        g = log_b - logsumexp(mr + f[:, None], axis=0)
        if it % check_every == 0:
            row = np.exp(logsumexp(mr + f[:, None] + g[None, :], axis=1))
            err = float(np.abs(row - a).sum())
            errors.append(err)
            if err <= tol:
                break
    return f, g, it, err, errors


def epsilon_schedule(reg_start: float, reg: float, rel_tol: float = 1e-3) -> list[float]:
    """Regularizations decaying geometrically from ``reg_start`` towards ``reg``.

    Stops once a stage is within ``rel_tol`` (relative) of ``reg``; ``reg``
    itself is not included.
    """
    stages = []
    i = 0
    while (value := (reg_start - reg) * math.exp(-i) + reg) - reg > rel_tol * reg:
        stages.append(value)
        i += 1
    return stages


def _sinkhorn_plain(a, b, c, reg, params: SinkhornParams) -> SinkhornResult:
    k = np.exp(-c / reg)
    if np.any(k.sum(axis=1) == 0) or np.any(k.sum(axis=0) == 0):
        raise NumericalUnderflowError(
            f"Gibbs kernel underflows at reg={reg:.3e}; use log_domain=True"
        )
    u = np.ones(a.shape[0])
    v = np.ones(b.shape[0])
    errors: list[float] = []
    err = np.inf
    it = 0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for it in range(1, params.max_iter + 1):
            u = a / (k @ v)
            v = b / (k.T @ u)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise NumericalUnderflowError(
                    f"scaling vectors overflowed at iteration {it}; use log_domain=True"
                )
            if it % params.check_every == 0:
                err = float(np.abs(u * (k @ v) - a).sum())
                errors.append(err)
                if err <= params.tol:
                    break
    plan = u[:, None] * k * v[None, :]
    with np.errstate(divide="ignore"):
        return _finish(np.log(u), np.log(v), plan, c, it, err, errors, reg, params)


def _finish(f, g, plan, c, it, err, errors, reg, params: SinkhornParams) -> SinkhornResult:
    converged = err <= params.tol
    if not converged:
        logger.warning(
            "Sinkhorn did not converge in %d iterations (marginal error %.3e, reg %.3e)",
            it, err, reg,
        )
    return SinkhornResult(
        log_u=f,
        log_v=g,
        plan=plan,
        cost=float(np.sum(plan * c)),
        iterations=it,
        marginal_error=err,
        converged=converged,
        reg=reg,
        errors=errors,
    )


def common_support(marginals: Sequence[Marginal]) -> tuple[np.ndarray, np.ndarray]:
    """Union of all support points and each marginal as a histogram on it.

    Histogram entries are zero off the marginal's own support.
    """
    dims = {m.dim for m in marginals}
    if len(dims) != 1:
        raise ShapeMismatchError(f"marginals live in different dimensions: {sorted(dims)}")
    stacked = np.concatenate([m.points for m in marginals], axis=0)
    points, inverse = np.unique(stacked, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    hists = np.zeros((len(marginals), points.shape[0]))
    start = 0
    for k, m in enumerate(marginals):
        np.add.at(hists[k], inverse[start : start + m.size], m.masses)
        start += m.size
    return points, hists


def ibp_barycenter(
    points: np.ndarray,
    histograms: np.ndarray,
    weights: Sequence[float],
    params: SinkhornParams,
) -> BarycenterResult:
    """Fixed-support entropic barycenter by iterative Bregman projections (log domain).

    ``histograms`` is (n_hists, n_points) on the shared ``points``.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    hists = np.asarray(histograms, dtype=np.float64)
    n_hists, dim = hists.shape
    if dim != points.shape[0]:
        raise ShapeMismatchError(f"histograms have {dim} bins for {points.shape[0]} points")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n_hists,):
        raise ShapeMismatchError(f"{w.shape[0]} weights for {n_hists} histograms")

    reg = _regularization(params, points)
    mr = -squared_distances(points, points) / reg
    log_a = np.log(hists + 1e-15)
    log_ku = np.zeros((n_hists, dim))
    g = np.zeros((n_hists, dim))
    err = np.inf
    it = 0
    for it in range(1, params.max_iter + 1):
        log_bar = np.zeros(dim)
        for k in range(n_hists):
            f = log_a[k] - logsumexp(mr + g[k][None, :], axis=1)
            log_ku[k] = logsumexp(mr + f[:, None], axis=0)
            log_bar += w[k] * log_ku[k]
        if it % params.check_every == 0:
            err = float(np.exp(g + log_ku).std(axis=0).sum())
            if err <= params.tol:
                break
        g = log_bar[None, :] - log_ku

    converged = err <= params.tol
    if not converged:
        logger.warning("IBP barycenter did not converge in %d iterations (error %.3e)", it, err)
    masses = np.exp(log_bar)
    masses /= masses.sum()
    return BarycenterResult(points, masses, it, err, converged, reg)
