"""
Bivariate Frank copula: density, CDF, rank-correlation maps, Kendall
distribution function and sampling.

All evaluators broadcast over numpy arrays.  For ``|theta| < EPS0`` the
independence limit is handled with second-order Taylor expansions in theta;
otherwise the closed forms are evaluated in a factored, overflow-free way
(every exponent that appears has a non-positive argument).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import integrate, optimize

EPS0 = 1e-5
#: bracket used when inverting the rank-correlation maps
INVERSION_BRACKET = 500.0
_UNIT_CLIP = 2.0**-53


class DomainError(ValueError):
    """Argument outside the domain of a copula function."""


class DebyeValues(NamedTuple):
    d1: float
    d2: float


def _as_float(x):
    return np.asarray(x, dtype=float)


def _check_open_unit(*arrays):
    for a in arrays:
        if np.any(~np.isfinite(a)) or np.any((a <= 0.0) | (a >= 1.0)):
            raise DomainError("coordinates must lie strictly inside (0, 1)")


def _check_theta(theta):
    if np.any(~np.isfinite(theta)):
        raise DomainError("theta must be finite")


def _reduced(u, v, theta):
    """Map (u, v, theta) to an equivalent triple with theta >= 0.

    Uses c(u, v | -theta) = c(u, 1 - v | theta).
    """
    neg = theta < 0
    return u, np.where(neg, 1.0 - v, v), np.abs(theta), neg


def _log_bracket(m, d, a):
    # log of B = 1 - e^{-a(1-m)} - e^{-a d}(e^{-a m} - 1), with A2 = e^{-a m} B
    return np.log(-np.expm1(-a * (1.0 - m)) - np.exp(-a * d) * np.expm1(-a * m))


def log_density(u, v, theta):
    """Log of the Frank copula density ``c(u, v | theta)``.

    Raises
    ------
    DomainError
        If ``u`` or ``v`` is outside the open unit interval.
    """
    u, v, theta = _as_float(u), _as_float(v), _as_float(theta)
    _check_open_unit(u, v)
    _check_theta(theta)
    u, v, theta = np.broadcast_arrays(u, v, theta)
    ur, vr, a, _ = _reduced(u, v, theta)
    small = a < EPS0
    a_big = np.where(small, 1.0, a)
    m = np.minimum(ur, vr)
    d = np.abs(ur - vr)
    with np.errstate(divide="ignore"):
        exact = (np.log(a_big) + np.log1p(-np.exp(-a_big)) - a_big * d
                 - 2.0 * _log_bracket(m, d, a_big))
    p = (2.0 * u - 1.0) * (2.0 * v - 1.0) / 2.0
    q = u * v * (1.0 - u) * (1.0 - v) - 1.0 / 24.0
    series = theta * p + theta**2 * q
    out = np.where(small, series, exact)
    return out[()] if out.ndim == 0 else out


def density(u, v, theta):
    """Frank copula density ``c(u, v | theta)``; equals 1 at ``theta = 0``."""
    return np.exp(log_density(u, v, theta))


def cdf(u, v, theta):
    """Frank copula ``C(u, v | theta)`` on the closed unit square."""
    u, v, theta = _as_float(u), _as_float(v), _as_float(theta)
    _check_theta(theta)
    for a in (u, v):
        if np.any((a < 0.0) | (a > 1.0)) or np.any(~np.isfinite(a)):
            raise DomainError("coordinates must lie in [0, 1]")
    u, v, theta = np.broadcast_arrays(u, v, theta)
    neg = theta < 0
    a = np.abs(theta)
    small = a < EPS0
    a_big = np.where(small, 1.0, a)
    # C(u, v | -a) = u - C(u, 1 - v | a)
    w = np.where(neg, 1.0 - v, v)
    m = np.minimum(u, w)
    d = np.abs(u - w)
    with np.errstate(divide="ignore", invalid="ignore"):
        c_pos = m - (_log_bracket(m, d, a_big) - np.log1p(-np.exp(-a_big))) / a_big
        # the two logs above cancel for small a; the product form does not
        prod = np.expm1(-a_big * u) * np.expm1(-a_big * w) / np.expm1(-a_big)
        c_pos = np.where(a_big < 1.0, -np.log1p(prod) / a_big, c_pos)
    c_pos = np.where(m <= 0.0, 0.0, c_pos)
    exact = np.where(neg, u - c_pos, c_pos)
    uv = u * v
    series = (uv + theta * uv * (1 - u) * (1 - v) / 2.0
              + theta**2 * uv * (1 - u) * (1 - 2 * u) * (1 - v) * (1 - 2 * v) / 12.0)
    out = np.clip(np.where(small, series, exact), 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def _debye_integrand(t, power):
    if t == 0.0:
        return 1.0 if power == 1 else 0.0
    return t**power / np.expm1(t)


def _debye_scalar(theta: float) -> DebyeValues:
    if abs(theta) < EPS0:
        return DebyeValues(1.0 - theta / 4.0 + theta**2 / 36.0,
                           1.0 - theta / 3.0 + theta**2 / 24.0)
    kw = dict(epsabs=1e-10, epsrel=1e-12, limit=200)
    i1, _ = integrate.quad(_debye_integrand, 0.0, theta, args=(1,), **kw)
    i2, _ = integrate.quad(_debye_integrand, 0.0, theta, args=(2,), **kw)
    return DebyeValues(i1 / theta, 2.0 * i2 / theta**2)


def debye_integrals(theta) -> DebyeValues:
    """First- and second-order Debye functions ``D1(theta)``, ``D2(theta)``.

    Computed by adaptive quadrature (absolute tolerance 1e-10); array input
    returns a ``DebyeValues`` of arrays.
    """
    theta = _as_float(theta)
    _check_theta(theta)
    if theta.ndim == 0:
        return _debye_scalar(float(theta))
    vals = [_debye_scalar(float(t)) for t in theta.ravel()]
    return DebyeValues(np.array([x.d1 for x in vals]).reshape(theta.shape),
                       np.array([x.d2 for x in vals]).reshape(theta.shape))


def kendall_tau(theta):
    """Kendall's tau of the Frank copula, ``1 - 4 (1 - D1) / theta``."""
    theta = _as_float(theta)
    d1, _ = debye_integrals(theta)
    small = np.abs(theta) < EPS0
    safe = np.where(small, 1.0, theta)
    out = np.where(small, theta / 9.0 - theta**3 / 900.0, 1.0 - 4.0 * (1.0 - d1) / safe)
    return out[()] if out.ndim == 0 else out


def spearman_rho(theta):
    """Spearman's rho of the Frank copula, ``1 - 12 (D1 - D2) / theta``."""
    theta = _as_float(theta)
    d1, d2 = debye_integrals(theta)
    small = np.abs(theta) < EPS0
    safe = np.where(small, 1.0, theta)
    out = np.where(small, theta / 6.0 - theta**3 / 450.0, 1.0 - 12.0 * (d1 - d2) / safe)
    return out[()] if out.ndim == 0 else out


def _invert(fn, target: float, name: str, xtol: float = 1e-12) -> float:
    target = float(target)
    if not -1.0 < target < 1.0:
        raise DomainError(f"{name} must lie strictly inside (-1, 1), got {target}")
    if target == 0.0:
        return 0.0
    sign = 1.0 if target > 0 else -1.0
    lo, hi = 0.0, INVERSION_BRACKET
    while fn(hi) < abs(target):
        lo, hi = hi, hi * 4.0
        if hi > 1e9:
            raise DomainError(f"{name}={target} is too close to +-1 to invert")
    root = optimize.brentq(lambda t: fn(t) - abs(target), lo, hi, xtol=xtol, rtol=1e-15)
    return sign * root


def invert_tau(target: float) -> float:
    """Theta whose Kendall's tau equals ``target``."""
    return _invert(kendall_tau, target, "tau")


def invert_rho(target: float) -> float:
    """Theta whose Spearman's rho equals ``target``."""
    return _invert(spearman_rho, target, "rho")


def _k_parts(t, theta):
    t, theta = np.broadcast_arrays(_as_float(t), _as_float(theta))
    small = np.abs(theta) < EPS0
    pos = theta > 0
    a = np.where(small, 1.0, np.abs(theta))
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        # theta > 0: K = t + (1 - e^{-a(1-t)}) g(q) / a, k = r g(q)
        em_t = -np.expm1(-a * t)
        em_rest = -np.expm1(-a * (1.0 - t))
        r = em_rest / em_t
        q = np.exp(-a * t) * r
        g = np.where(q < 1e-8, 1.0 - q / 2.0, np.log1p(q) / np.where(q == 0, 1.0, q))
        K_pos = t + em_rest * g / a
        k_pos = r * g
        # theta < 0 (a = -theta): L = a (1 - t) + log(1 - e^{-a}) - log(1 - e^{-a t})
        L = a * (1.0 - t) + np.log1p(-np.exp(-a)) - np.log(em_t)
        K_neg = t + em_t * L / a
        k_neg = np.exp(-a * t) * L
    lt = np.log(t)
    K_ser = (t - t * lt - theta * t * (t * lt - t + 1) / 2.0
             - theta**2 * t * (4 * t**2 * lt - 5 * t**2 + 6 * t - 1) / 24.0)
    k_ser = (-lt - theta * (2 * t * lt - t + 1) / 2.0
             - theta**2 * (12 * t**2 * lt - 11 * t**2 + 12 * t - 1) / 24.0)
    K = np.where(small, K_ser, np.where(pos, K_pos, K_neg))
    k = np.where(small, k_ser, np.where(pos, k_pos, k_neg))
    return K, k


def k_cdf(t, theta):
    """Kendall distribution ``K(t | theta) = P(C(U, V) <= t)``.

    Arguments ``t >= 1`` return 1; ``t <= 0`` raises ``DomainError``.
    """
    t, theta = _as_float(t), _as_float(theta)
    _check_theta(theta)
    if np.any(~(t > 0.0)):
        raise DomainError("k_cdf requires t > 0")
    tc = np.minimum(t, 1.0)
    K, _ = _k_parts(tc, theta)
    out = np.where(np.broadcast_to(t, K.shape) >= 1.0, 1.0, np.clip(K, 0.0, 1.0))
    return out[()] if out.ndim == 0 else out


def k_density(t, theta):
    """Density ``k(t | theta)`` of the Kendall distribution on (0, 1)."""
    t, theta = _as_float(t), _as_float(theta)
    _check_theta(theta)
    _check_open_unit(t)
    _, k = _k_parts(t, theta)
    return k[()] if k.ndim == 0 else k


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample(n: int, theta: float, seed=None) -> np.ndarray:
    """Draw ``n`` pairs from the Frank copula by conditional inversion.

    Returns an ``(n, 2)`` array.  Negative ``theta`` is drawn at ``|theta|``
    and reflected, so ``sample(n, -t, s)`` is the reflection of
    ``sample(n, t, s)``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    theta = float(theta)
    _check_theta(theta)
    rng = _generator(seed)
    u = rng.random(n)
    w = rng.random(n)
    a = abs(theta)
    if a < EPS0:
        v = w
    else:
        v = -np.log1p(w * np.expm1(-a) / (w + (1.0 - w) * np.exp(-a * u))) / a
    if theta < 0:
        v = 1.0 - v
    out = np.column_stack([u, v])
    return np.clip(out, _UNIT_CLIP, 1.0 - _UNIT_CLIP)


def reflect(pairs) -> np.ndarray:
    """Map each pair ``(u, v)`` to ``(u, 1 - v)``."""
    pairs = np.array(pairs, dtype=float, copy=True)
    pairs[..., 1] = 1.0 - pairs[..., 1]
    return pairs
