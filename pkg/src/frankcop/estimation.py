"""
Point estimation of the Frank association parameter.

Classical estimators (maximum likelihood by two routes, and the two
moment-inversion estimators) and posterior means under a flat prior and the
Jeffreys prior, together with the Fisher information per observation.

Every estimator accepts either an ``(n, 2)`` array of pseudo-observations or
any object exposing such an array as ``.pairs``.
"""

from __future__ import annotations

import enum
import functools
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import optimize

from . import copula
from .copula import EPS0, DomainError
from .data import kendall_pairs, spearman_pairs

#: search interval for the maximum likelihood estimate
THETA_BOUND = 50.0
#: default posterior window half-width and number of subintervals
WINDOW_HALF_WIDTH = 25.0
WINDOW_INTERVALS = 2000

_FIPO_ATOL = 1e-7
_FIPO_RTOL = 1e-9
_FIPO_MAX_PANELS = 256
_GL_ORDER = 8


class Method(str, enum.Enum):
    MLE_LOGLIK = "MLE_LOGLIK"
    MLE_SCORE = "MLE_SCORE"
    MME1 = "MME1"
    MME2 = "MME2"
    BFPE = "BFPE"
    BJPE = "BJPE"


class Approach(str, enum.Enum):
    LOGLIK_MAX = "LOGLIK_MAX"
    SCORE_ROOT = "SCORE_ROOT"


class ConvergenceError(RuntimeError):
    """An estimator could not produce a usable value."""


@dataclass(frozen=True)
class Diagnostics:
    iterations: int
    converged: bool
    objective_at_solution: float


@dataclass(frozen=True)
class EstimatorResult:
    estimate: float
    method: Method
    diagnostics: Diagnostics

    def __float__(self) -> float:
        return float(self.estimate)


@dataclass(frozen=True)
class FisherInfo:
    """Fisher information per observation, ``value = i1 - i2``."""

    theta: float
    value: float
    i1: float
    i2: float


@dataclass(frozen=True)
class PosteriorGrid:
    """Equally spaced theta nodes with log-scale posterior weights.

    ``log_weights`` are shifted so that their maximum is 0.
    """

    theta_nodes: np.ndarray
    log_weights: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def mean(self) -> float:
        w = self.weights
        total = w.sum()
        if not total > 0.0 or not np.isfinite(total):
            raise ConvergenceError("posterior weights vanished on the grid")
        return float(np.dot(w, self.theta_nodes) / total)


def as_pairs(data) -> np.ndarray:
    """Coerce ``data`` (array or object with ``.pairs``) to an ``(n, 2)`` array."""
    arr = np.asarray(getattr(data, "pairs", data), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) array of pairs, got shape {arr.shape}")
    return arr


# --- per-observation score ---------------------------------------------------

def _score_positive(u, v, a):
    # derivative of log c in theta for theta = a > 0, overflow-free
    m = np.minimum(u, v)
    big = np.maximum(u, v)
    d = big - m
    e_rest = np.exp(-a * (1.0 - m))
    e_d = np.exp(-a * d)
    em_m = np.expm1(-a * m)
    b = -np.expm1(-a * (1.0 - m)) - e_d * em_m
    db = (1.0 - m) * e_rest + d * e_d * em_m + m * np.exp(-a * big)
    # 1/(e^a - 1) written with a non-positive exponent
    tail = np.exp(-a) / -np.expm1(-a)
    return 1.0 / a + tail - d - 2.0 * db / b


def observation_scores(u, v, theta):
    """``d/dtheta log c(u, v | theta)`` elementwise (no domain checks)."""
    u, v, theta = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float),
                                      np.asarray(theta, float))
    neg = theta < 0
    a = np.abs(theta)
    small = a < EPS0
    a_big = np.where(small, 1.0, a)
    vr = np.where(neg, 1.0 - v, v)
    exact = _score_positive(u, vr, a_big)
    exact = np.where(neg, -exact, exact)
    p = (2.0 * u - 1.0) * (2.0 * v - 1.0) / 2.0
    q = u * v * (1.0 - u) * (1.0 - v) - 1.0 / 24.0
    return np.where(small, p + 2.0 * theta * q, exact)


def log_likelihood(data, theta):
    """Sum of log densities; ``theta`` may be an array (one value per entry)."""
    pairs = as_pairs(data)
    th = np.asarray(theta, dtype=float)
    u = pairs[:, 0].reshape((-1,) + (1,) * th.ndim)
    v = pairs[:, 1].reshape((-1,) + (1,) * th.ndim)
    out = copula.log_density(u, v, th[None, ...]).sum(axis=0)
    return float(out) if np.ndim(out) == 0 else out


def score(data, theta: float) -> float:
    """Per-observation score ``(1/n) d loglik / d theta``."""
    pairs = as_pairs(data)
    copula._check_open_unit(pairs)
    return float(np.mean(observation_scores(pairs[:, 0], pairs[:, 1], float(theta))))


# --- maximum likelihood ------------------------------------------------------

def _at_bound(x: float) -> bool:
    return abs(abs(x) - THETA_BOUND) < 1e-6


def _mle_loglik(pairs: np.ndarray) -> EstimatorResult:
    u, v = pairs[:, :1], pairs[:, 1:]
    grid = np.linspace(-THETA_BOUND, THETA_BOUND, 101)
    ll = copula.log_density(u, v, grid[None, :]).sum(axis=0)
    k = int(np.argmax(ll))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]

    def neg(t):
        return -float(copula.log_density(u[:, 0], v[:, 0], t).sum())

    res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10, "maxiter": 500})
    est = float(res.x)
    converged = bool(res.success) and not _at_bound(est)
    return EstimatorResult(est, Method.MLE_LOGLIK,
                           Diagnostics(int(res.nfev) + grid.size, converged, -float(res.fun)))


@functools.lru_cache(maxsize=1)
def _tau_table() -> tuple[np.ndarray, np.ndarray]:
    nodes = np.linspace(-THETA_BOUND, THETA_BOUND, 401)
    return copula.kendall_tau(nodes), nodes


def _rough_start(pairs: np.ndarray) -> float:
    # moment estimate from an interpolated tau map; only a starting value
    tau = kendall_pairs(pairs)
    if not np.isfinite(tau):
        return 0.0
    taus, nodes = _tau_table()
    return float(np.interp(tau, taus, nodes))


def _mle_score(pairs: np.ndarray, tol: float = 1e-10) -> EstimatorResult:
    u, v = pairs[:, 0], pairs[:, 1]

    def h(t):
        return float(np.mean(observation_scores(u, v, t)))

    start = _rough_start(pairs)
    iters = 0
    est = None
    try:
        # a diverging secant run is expected on some samples; the bracket below takes over
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sol = optimize.root_scalar(h, x0=start, x1=start + 0.05 * (1.0 + abs(start)),
                                       method="secant", xtol=1e-12, maxiter=60)
        iters = sol.function_calls
        if sol.converged and abs(sol.root) <= THETA_BOUND and abs(h(sol.root)) < tol:
            est = float(sol.root)
    except (OverflowError, ZeroDivisionError, ValueError):
        pass
    if est is None:
        # bracket outward from the start and fall back to Brent's method
        lo = hi = float(np.clip(start, -THETA_BOUND, THETA_BOUND))
        step = 0.5
        while h(lo) < 0 and lo > -THETA_BOUND:
            lo = max(lo - step, -THETA_BOUND)
            step *= 2.0
        step = 0.5
        while h(hi) > 0 and hi < THETA_BOUND:
            hi = min(hi + step, THETA_BOUND)
            step *= 2.0
        if h(lo) >= 0 >= h(hi) and lo < hi:
            est, rr = optimize.brentq(h, lo, hi, xtol=1e-13, full_output=True)
            iters += rr.function_calls
        else:
            fallback = _mle_loglik(pairs)
            return EstimatorResult(fallback.estimate, Method.MLE_SCORE,
                                   Diagnostics(iters + fallback.diagnostics.iterations,
                                               False, h(fallback.estimate)))
    final = h(est)
    return EstimatorResult(est, Method.MLE_SCORE,
                           Diagnostics(iters, abs(final) < 1e-8 and not _at_bound(est), final))


def mle(data, approach: Approach | str = Approach.SCORE_ROOT) -> EstimatorResult:
    """Maximum likelihood estimate over ``[-50, 50]``.

    Parameters
    ----------
    data : array_like or PseudoSample
        Pseudo-observations, shape ``(n, 2)``.
    approach : {"SCORE_ROOT", "LOGLIK_MAX"}
        ``SCORE_ROOT`` solves the score equation by the secant method started
        at the moment estimate (bracketing fallback); ``LOGLIK_MAX`` maximizes
        the log-likelihood with a bounded derivative-free search.

    Notes
    -----
    Non-convergence is reported through ``diagnostics.converged``; the best
    iterate is still returned.
    """
    pairs = as_pairs(data)
    if pairs.shape[0] < 2:
        raise ValueError("mle needs at least two observations")
    copula._check_open_unit(pairs)
    approach = Approach(approach)
    if approach is Approach.LOGLIK_MAX:
        return _mle_loglik(pairs)
    return _mle_score(pairs)


def _moment(value: float, fn, method: Method, name: str) -> EstimatorResult:
    if not abs(value) < 1.0:
        raise DomainError(f"sample {name} is {value:+.0f}: perfect dependence, no finite estimate")
    est = copula._invert(fn, value, name)
    return EstimatorResult(est, method, Diagnostics(0, True, float(fn(est)) - value))


def mme1(data) -> EstimatorResult:
    """Kendall-tau inversion estimate (tau-b of the pairs)."""
    return _moment(kendall_pairs(as_pairs(data)), copula.kendall_tau, Method.MME1, "tau")


def mme2(data) -> EstimatorResult:
    """Spearman-rho inversion estimate."""
    return _moment(spearman_pairs(as_pairs(data)), copula.spearman_rho, Method.MME2, "rho")


# --- Fisher information ------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _gl_panels(panels: int):
    x, w = leggauss(_GL_ORDER)
    edges = np.linspace(0.0, 1.0, panels + 1)
    nodes = (edges[:-1, None] + (x[None, :] + 1.0) / (2.0 * panels)).ravel()
    weights = np.tile(w / (2.0 * panels), panels)
    return nodes, weights


def _expected_square_score(theta: float, panels: int) -> float:
    x, w = _gl_panels(panels)
    u, v = np.meshgrid(x, x, indexing="ij")
    s = observation_scores(u, v, theta)
    c = np.exp(copula.log_density(u, v, theta))
    return float(w @ (s * s * c) @ w)


def info_i1(theta: float) -> float:
    """``theta^-2 + e^theta / (e^theta - 1)^2``; infinite at 0."""
    theta = abs(float(theta))
    if theta == 0.0:
        return float("inf")
    with np.errstate(over="ignore", divide="ignore"):
        return float(np.float64(theta) ** -2 + 1.0 / (4.0 * np.sinh(theta / 2.0) ** 2))


@functools.lru_cache(maxsize=65536)
def _fipo_abs(a: float) -> float:
    panels = 8
    prev = _expected_square_score(a, panels)
    while panels < _FIPO_MAX_PANELS:
        panels *= 2
        cur = _expected_square_score(a, panels)
        if abs(cur - prev) <= max(min(_FIPO_ATOL, _FIPO_RTOL * abs(cur)), 1e-15):
            return cur
        prev = cur
    raise ConvergenceError(f"Fisher information quadrature did not settle at theta={a}")


def fisher_information(theta: float) -> FisherInfo:
    """Fisher information per observation at ``theta``.

    The value is computed as ``E[score^2]`` with a composite Gauss-Legendre
    tensor rule, doubling the panel count until successive values agree.
    This form has no cancellation near ``theta = 0``, where ``i1`` and ``i2``
    both diverge; ``i2`` is reported as ``i1 - value``.
    """
    theta = float(theta)
    copula._check_theta(theta)
    a = round(abs(theta), 10)
    value = _fipo_abs(a)
    i1 = info_i1(theta)
    return FisherInfo(theta, value, i1, i1 - value)


def jeffreys_prior(theta) -> np.ndarray | float:
    """Square root of the Fisher information (cached per ``|theta|``)."""
    th = np.asarray(theta, dtype=float)
    out = np.array([np.sqrt(_fipo_abs(round(abs(float(t)), 10))) for t in th.ravel()])
    out = out.reshape(th.shape)
    return float(out) if out.ndim == 0 else out


# --- Bayes estimators ---------------------------------------------------------

def _window(center: float, half_width: float, intervals: int) -> np.ndarray:
    if intervals < 1 or not half_width > 0:
        raise ValueError("need intervals >= 1 and half_width > 0")
    return float(center) + half_width * (2.0 * np.arange(intervals + 1) / intervals - 1.0)


def _log_jeffreys(nodes: np.ndarray) -> np.ndarray:
    return 0.5 * np.log([_fipo_abs(round(abs(float(t)), 10)) for t in nodes])


@functools.lru_cache(maxsize=64)
def _log_jeffreys_window(center: float, half_width: float, intervals: int) -> np.ndarray:
    out = _log_jeffreys(_window(center, half_width, intervals))
    out.setflags(write=False)
    return out


def prepare_jeffreys(center: float, half_width: float = WINDOW_HALF_WIDTH,
                     intervals: int = WINDOW_INTERVALS) -> None:
    """Fill the Jeffreys-prior cache for one window (call before forking workers)."""
    _log_jeffreys_window(float(center), float(half_width), int(intervals))


def _normalized(nodes: np.ndarray, logw: np.ndarray) -> PosteriorGrid:
    top = np.max(logw)
    if not np.isfinite(top):
        raise ConvergenceError("log posterior is not finite on the grid")
    return PosteriorGrid(nodes, logw - top)


def posterior_grid(data, center: float, half_width: float = WINDOW_HALF_WIDTH,
                   intervals: int = WINDOW_INTERVALS, prior: str = "flat") -> PosteriorGrid:
    """Posterior weights on ``intervals + 1`` nodes spanning ``center +- half_width``.

    ``prior`` is ``"flat"`` or ``"jeffreys"``.
    """
    nodes = _window(center, half_width, intervals)
    if prior not in ("flat", "jeffreys"):
        raise ValueError(f"unknown prior {prior!r}")
    logw = log_likelihood(data, nodes)
    if prior == "jeffreys":
        logw = logw + _log_jeffreys_window(float(center), float(half_width), int(intervals))
    return _normalized(nodes, logw)


def _result(grid: PosteriorGrid, method: Method) -> EstimatorResult:
    edge = max(grid.log_weights[0], grid.log_weights[-1])
    return EstimatorResult(grid.mean(), method,
                           Diagnostics(grid.theta_nodes.size, bool(edge < -30.0), float(edge)))


def _bayes(data, prior, method, center, half_width, intervals) -> EstimatorResult:
    pairs = as_pairs(data)
    if pairs.shape[0] < 2:
        raise ValueError("need at least two observations")
    copula._check_open_unit(pairs)
    if center is None:
        center = mle(pairs).estimate
    return _result(posterior_grid(pairs, center, half_width, intervals, prior), method)


def bayes_flat(data, center: float | None = None, half_width: float = WINDOW_HALF_WIDTH,
               intervals: int = WINDOW_INTERVALS) -> EstimatorResult:
    """Posterior mean under a constant prior (Riemann sum on the window).

    The window is centred at ``center``, or at the maximum likelihood
    estimate when ``center`` is None.  ``diagnostics.converged`` is False when
    the posterior has not decayed by ``e^-30`` at the window edges.
    """
    return _bayes(data, "flat", Method.BFPE, center, half_width, intervals)


def bayes_jeffreys(data, center: float | None = None, half_width: float = WINDOW_HALF_WIDTH,
                   intervals: int = WINDOW_INTERVALS) -> EstimatorResult:
    """Posterior mean under the Jeffreys prior; see :func:`bayes_flat`."""
    return _bayes(data, "jeffreys", Method.BJPE, center, half_width, intervals)


def bayes_both(data, center: float | None = None, half_width: float = WINDOW_HALF_WIDTH,
               intervals: int = WINDOW_INTERVALS) -> tuple[EstimatorResult, EstimatorResult]:
    """Flat and Jeffreys posterior means sharing one likelihood evaluation.

    Results are identical to separate :func:`bayes_flat` and
    :func:`bayes_jeffreys` calls.
    """
    pairs = as_pairs(data)
    if pairs.shape[0] < 2:
        raise ValueError("need at least two observations")
    copula._check_open_unit(pairs)
    if center is None:
        center = mle(pairs).estimate
    nodes = _window(center, half_width, intervals)
    loglik = log_likelihood(pairs, nodes)
    flat = _normalized(nodes, loglik)
    jeff = _normalized(nodes, loglik + _log_jeffreys_window(float(center), float(half_width),
                                                            int(intervals)))
    return _result(flat, Method.BFPE), _result(jeff, Method.BJPE)


def estimate_all(data) -> dict[Method, EstimatorResult]:
    """All six estimates; the Bayes windows are centred at the score-root MLE."""
    pairs = as_pairs(data)
    out = {Method.MLE_LOGLIK: mle(pairs, Approach.LOGLIK_MAX)}
    out[Method.MLE_SCORE] = mle(pairs, Approach.SCORE_ROOT)
    for fn, m in ((mme1, Method.MME1), (mme2, Method.MME2)):
        out[m] = fn(pairs)
    out[Method.BFPE], out[Method.BJPE] = bayes_both(pairs, out[Method.MLE_SCORE].estimate)
    return out
