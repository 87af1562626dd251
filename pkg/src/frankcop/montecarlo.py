"""
Monte Carlo bias and mean squared error of the estimators.

Each replication draws its sample from its own random stream, keyed by
``(seed, n, |theta|, replication index)``.  Output is therefore identical for
any number of worker processes, and the cells at ``theta`` and ``-theta``
see exactly reflected samples.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass

import numpy as np

from . import copula
from ._parallel import indexed_map, stream, theta_key
from .estimation import (
    WINDOW_HALF_WIDTH,
    WINDOW_INTERVALS,
    Approach,
    Method,
    bayes_both,
    mle,
    mme1,
    mme2,
    prepare_jeffreys,
)

_MC_TAG = 3
#: a cell fails if more than this fraction of replications raise
MAX_FAILURE_RATE = 1e-3
DEFAULT_ESTIMATORS = (Method.MLE_SCORE, Method.BFPE, Method.BJPE)


class SimulationError(RuntimeError):
    """Too many replications failed in a cell."""


@dataclass(frozen=True)
class ExperimentPlan:
    """Parameter grid and replication settings for a simulation run.

    ``centering`` chooses where the posterior window sits: ``"true"`` centres
    it at the simulated theta, ``"mle"`` at each sample's MLE.
    """

    n_grid: tuple[int, ...]
    theta_grid: tuple[float, ...]
    reps_total: int = 10_000
    batches: int = 4
    estimators: tuple[Method, ...] = DEFAULT_ESTIMATORS
    seed: int = 0
    centering: str = "true"
    half_width: float = WINDOW_HALF_WIDTH
    intervals: int = WINDOW_INTERVALS

    def __post_init__(self):
        if self.batches < 2:
            raise ValueError("batches must be at least 2")
        if self.reps_total % self.batches:
            raise ValueError("reps_total must be divisible by batches")
        if self.centering not in ("true", "mle"):
            raise ValueError("centering must be 'true' or 'mle'")
        object.__setattr__(self, "estimators", tuple(Method(m) for m in self.estimators))


@dataclass(frozen=True)
class CellResult:
    n: int
    theta: float
    estimator: Method
    bias: float
    bias_se: float
    mse: float
    mse_se: float
    reps: int
    failures: int = 0

    @property
    def sb(self) -> float:
        """Standardized bias ``bias / |theta|``."""
        return self.bias / abs(self.theta)

    @property
    def smse(self) -> float:
        """Standardized MSE ``mse / theta^2``."""
        return self.mse / self.theta**2


def _replicate(n: int, theta: float, plan: ExperimentPlan, i: int) -> tuple[float, ...]:
    rng = stream(plan.seed, _MC_TAG, n, theta_key(theta), i)
    uv = copula.sample(n, theta, rng)
    out = {}
    try:
        ests = set(plan.estimators)
        if ests & {Method.MLE_SCORE, Method.BFPE, Method.BJPE} or plan.centering == "mle":
            out[Method.MLE_SCORE] = mle(uv, Approach.SCORE_ROOT).estimate
        if Method.MLE_LOGLIK in ests:
            out[Method.MLE_LOGLIK] = mle(uv, Approach.LOGLIK_MAX).estimate
        if Method.MME1 in ests:
            out[Method.MME1] = mme1(uv).estimate
        if Method.MME2 in ests:
            out[Method.MME2] = mme2(uv).estimate
        if ests & {Method.BFPE, Method.BJPE}:
            center = theta if plan.centering == "true" else out[Method.MLE_SCORE]
            flat, jeff = bayes_both(uv, center, plan.half_width, plan.intervals)
            out[Method.BFPE], out[Method.BJPE] = flat.estimate, jeff.estimate
    except (ArithmeticError, ValueError, RuntimeError):
        return tuple(math.nan for _ in plan.estimators)
    return tuple(out.get(m, math.nan) for m in plan.estimators)


def simulate_estimates(n: int, theta: float, plan: ExperimentPlan,
                       threads: int | None = 1) -> np.ndarray:
    """``(reps_total, len(estimators))`` array of estimates (NaN on failure)."""
    if Method.BJPE in plan.estimators and plan.centering == "true":
        prepare_jeffreys(theta, plan.half_width, plan.intervals)
    fn = functools.partial(_replicate, int(n), float(theta), plan)
    return np.array(indexed_map(fn, plan.reps_total, threads), dtype=float).reshape(
        plan.reps_total, len(plan.estimators))


def summarize(estimates: np.ndarray, n: int, theta: float, plan: ExperimentPlan) -> list[CellResult]:
    """Bias and MSE with their standard errors, per estimator column.

    ``bias_se = sqrt(mse / M)`` and ``mse_se`` is the standard deviation of
    the per-batch MSEs over ``sqrt(batches)``.
    """
    rows = []
    for k, method in enumerate(plan.estimators):
        col = estimates[:, k]
        ok = np.isfinite(col)
        failures = int((~ok).sum())
        if failures > MAX_FAILURE_RATE * col.size:
            raise SimulationError(f"{failures} of {col.size} replications failed for "
                                  f"{method.value} at n={n}, theta={theta:g}")
        err = col - theta
        m = int(ok.sum())
        bias = float(np.mean(err[ok]))
        mse = float(np.mean(err[ok] ** 2))
        batch_mse = [float(np.mean(b[np.isfinite(b)] ** 2))
                     for b in np.array_split(err, plan.batches)]
        mse_se = float(np.std(batch_mse, ddof=1) / math.sqrt(plan.batches))
        rows.append(CellResult(int(n), float(theta), method, bias, math.sqrt(mse / m), mse,
                               mse_se, m, failures))
    return rows


def run_cell(n: int, theta: float, plan: ExperimentPlan,
             threads: int | None = 1) -> list[CellResult]:
    """Simulate one ``(n, theta)`` cell for every estimator in ``plan``."""
    return summarize(simulate_estimates(n, theta, plan, threads), n, theta, plan)


def run_plan(plan: ExperimentPlan, threads: int | None = 1) -> list[CellResult]:
    rows = []
    for n in plan.n_grid:
        for theta in plan.theta_grid:
            rows.extend(run_cell(n, theta, plan, threads))
    return rows


@dataclass(frozen=True)
class NegationVerdict:
    passed: bool
    bias_gap: float
    bias_tol: float
    mse_gap: float
    mse_tol: float


def negation_check(pos: CellResult, neg: CellResult, k: float = 3.0) -> NegationVerdict:
    """Check ``bias(-theta) = -bias(theta)`` and equal MSE within ``k`` combined SE."""
    if pos.estimator != neg.estimator or pos.n != neg.n or pos.theta != -neg.theta:
        raise ValueError("cells must share n and estimator at opposite theta")
    bias_gap = abs(pos.bias + neg.bias)
    bias_tol = k * math.hypot(pos.bias_se, neg.bias_se)
    mse_gap = abs(pos.mse - neg.mse)
    mse_tol = k * math.hypot(pos.mse_se, neg.mse_se)
    return NegationVerdict(bias_gap <= bias_tol and mse_gap <= mse_tol,
                           bias_gap, bias_tol, mse_gap, mse_tol)


CSV_HEADER = ("n", "theta", "estimator", "bias", "bias_se", "mse", "mse_se", "reps")


def write_csv(rows, fh, digits: int = 6) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.n, f"{r.theta:g}", r.estimator.value, f"{r.bias:.{digits}f}",
                    f"{r.bias_se:.{digits}f}", f"{r.mse:.{digits}f}", f"{r.mse_se:.{digits}f}",
                    r.reps])


def write_long_csv(rows, fh, digits: int = 6) -> None:
    """One line per (cell, quantity) for plotting."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("n", "theta", "estimator", "quantity", "value", "se"))
    for r in rows:
        for q, v, se in (("bias", r.bias, r.bias_se), ("mse", r.mse, r.mse_se),
                         ("sb", r.bias / abs(r.theta) if r.theta else math.nan,
                          r.bias_se / abs(r.theta) if r.theta else math.nan),
                         ("smse", r.mse / r.theta**2 if r.theta else math.nan,
                          r.mse_se / r.theta**2 if r.theta else math.nan)):
            w.writerow([r.n, f"{r.theta:g}", r.estimator.value, q, f"{v:.{digits}f}",
                        f"{se:.{digits}f}"])
