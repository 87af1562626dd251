"""
Goodness-of-fit tests for the Frank copula based on the Kendall process.

The Cramer-von Mises statistic ``S_n`` and the Kolmogorov-Smirnov statistic
``T_n`` compare the empirical distribution ``K_n`` of the pseudo-observations
``W_j = #{k : X_k <= X_j, Y_k <= Y_j} / n`` with the model distribution
``K(t | theta_hat)``.  Critical values come from simulation or the bundled
10,000-replication tables; p-values from a nonparametric row bootstrap.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import copula
from ._parallel import indexed_map, stream, theta_key
from .data import BivariateSample, grades
from .estimation import mle

LEVELS = (0.90, 0.95)
#: |theta_hat| at or above which negative estimates are handled by reflection
REORIENT_THRESHOLD = 2.5
_CRIT_TAG = 1
_BOOT_TAG = 2
_MIN_DISTINCT_ROWS = 3


class CoverageError(LookupError):
    """A critical-value request falls outside the table grid."""


@dataclass(frozen=True)
class PseudoSample:
    """Rank-based pairs and the dominance counts behind ``W_j``.

    ``counts[j] = n * W_j`` is stored as an integer so that comparisons with
    the grid points ``j / n`` are exact.
    """

    pairs: np.ndarray
    counts: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.size)

    @property
    def w(self) -> np.ndarray:
        return self.counts / self.n

    def kn_grid(self) -> np.ndarray:
        """``K_n(j / n)`` for ``j = 0, ..., n``."""
        return np.cumsum(np.bincount(self.counts, minlength=self.n + 1)) / self.n


def _columns(raw) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(raw, BivariateSample):
        return raw.x, raw.y
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("raw data must be a BivariateSample or an (n, 2) array")
    return arr[:, 0], arr[:, 1]


def dominance_counts(x, y) -> np.ndarray:
    """``#{k : x_k <= x_j and y_k <= y_j}`` for each ``j``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return ((x[None, :] <= x[:, None]) & (y[None, :] <= y[:, None])).sum(axis=1)


def pseudo_observations(raw) -> PseudoSample:
    """Grades ``(#{X_k <= x} + 0.5) / (n + 1)`` per margin and the ``W_j`` counts."""
    x, y = _columns(raw)
    if x.size < 2:
        raise ValueError("need at least two observations")
    pairs = np.column_stack([grades(x), grades(y)])
    return PseudoSample(pairs, dominance_counts(x, y))


def empirical_k(ps: PseudoSample, t):
    """Right-continuous empirical cdf of the ``W_j``."""
    t = np.asarray(t, dtype=float)
    # W_j <= t  <=>  counts_j <= n t; the small slack absorbs t = j/n round-off
    thresh = np.floor(t * ps.n + 1e-9)
    out = np.searchsorted(np.sort(ps.counts), thresh, side="right") / ps.n
    return out[()] if out.ndim == 0 else out


def _k_on(grid: np.ndarray, theta: float) -> np.ndarray:
    # model cdf with K(0) = 0 and the clamp K(t) = 1 for t >= 1
    out = np.zeros_like(grid)
    pos = grid > 0
    out[pos] = copula.k_cdf(grid[pos], theta)
    return out


def sn_statistic(ps: PseudoSample, theta_hat: float) -> float:
    """Cramer-von Mises distance ``n int (K_n - K)^2 dK`` in closed form."""
    n = ps.n
    j = np.arange(1, n + 1)
    kn = ps.kn_grid()[1:]
    k_j = _k_on(j / n, theta_hat)
    k_next = _k_on((j + 1) / n, theta_hat)
    first = np.sum(kn[:-1] ** 2 * (k_next[:-1] - k_j[:-1]))
    second = np.sum(kn * (k_next**2 - k_j**2))
    return float(n / 3.0 + n * first - n * second)


def tn_statistic(ps: PseudoSample, theta_hat: float, include_origin: bool = False) -> float:
    """Kolmogorov-Smirnov distance ``sqrt(n) sup |K_n - K|``.

    By default the supremum runs over ``t >= 1/n`` (grid points
    ``j = 1, ..., n``), the convention behind the bundled critical values.
    With ``include_origin=True`` it runs over ``j = 0, ..., n - 1``, which is
    the supremum over the whole of ``[0, 1]``.
    """
    n = ps.n
    j = np.arange(0, n) if include_origin else np.arange(1, n + 1)
    kn = ps.kn_grid()[j]
    gap = np.maximum(np.abs(kn - _k_on(j / n, theta_hat)),
                     np.abs(kn - _k_on((j + 1) / n, theta_hat)))
    return float(np.sqrt(n) * gap.max())


@dataclass(frozen=True)
class Statistics:
    theta_hat: float
    sn: float
    tn: float


def statistics(raw, theta_hat: float | None = None) -> Statistics:
    """Observed ``(theta_hat, S_n, T_n)``; ``theta_hat`` is the MLE unless given."""
    ps = pseudo_observations(raw)
    if theta_hat is None:
        theta_hat = mle(ps).estimate
    return Statistics(float(theta_hat), sn_statistic(ps, theta_hat), tn_statistic(ps, theta_hat))


def theta_use_policy(theta_hat: float) -> tuple[float, bool]:
    """``(|theta_hat|, theta_hat <= -2.5)``; the flag asks for reflected data."""
    theta_hat = float(theta_hat)
    return abs(theta_hat), theta_hat <= -REORIENT_THRESHOLD


# --- critical values -------------------------------------------------------------

def type1_quantile(values, level: float) -> float:
    """Order statistic ``ceil(m * level)`` of ``m`` values."""
    v = np.sort(np.asarray(values, dtype=float))
    k = math.ceil(round(v.size * level, 9))
    return float(v[min(max(k, 1), v.size) - 1])


def _critical_rep(n: int, theta: float, margins: str, seed: int, i: int) -> tuple[float, float]:
    rng = stream(seed, _CRIT_TAG, n, theta_key(theta), i)
    uv = copula.sample(n, theta, rng)
    ps = pseudo_observations(uv)
    fit_on = uv if margins == "known" else ps.pairs
    th = mle(fit_on).estimate
    return sn_statistic(ps, th), tn_statistic(ps, th)


@dataclass(frozen=True)
class CriticalCell:
    level: float
    n: int
    theta: float
    sn: float
    tn: float
    reps: int
    seed: int | None = None


def simulate_statistics(n: int, theta: float, reps: int, seed: int,
                        margins: str = "known", threads: int | None = 1) -> np.ndarray:
    """``(reps, 2)`` array of simulated ``(S_n, T_n)`` under ``theta``.

    ``margins="known"`` fits ``theta_hat`` to the simulated uniforms
    themselves; ``margins="ranks"`` fits it to their grades.
    """
    if margins not in ("known", "ranks"):
        raise ValueError("margins must be 'known' or 'ranks'")
    fn = functools.partial(_critical_rep, int(n), float(theta), margins, int(seed))
    return np.array(indexed_map(fn, int(reps), threads))


def simulate_critical_values(n: int, theta: float, levels=LEVELS, reps: int = 10_000,
                             seed: int = 0, margins: str = "known",
                             threads: int | None = 1) -> list[CriticalCell]:
    """Empirical upper quantiles of ``S_n`` and ``T_n``, one cell per level."""
    if reps < 100:
        raise ValueError("reps must be at least 100")
    sims = simulate_statistics(n, theta, reps, seed, margins, threads)
    return [CriticalCell(float(lv), int(n), float(theta), type1_quantile(sims[:, 0], lv),
                         type1_quantile(sims[:, 1], lv), int(reps), int(seed))
            for lv in levels]


@dataclass
class CriticalValueTable:
    cells: list[CriticalCell] = field(default_factory=list)

    HEADER = ("level", "n", "theta", "sn", "tn", "reps", "seed")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.write(fh)

    def write(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.HEADER)
        for c in sorted(self.cells, key=lambda c: (c.level, c.n, c.theta)):
            w.writerow([f"{c.level:.2f}", c.n, repr(float(c.theta)), f"{c.sn:.6f}",
                        f"{c.tn:.6f}", c.reps, "" if c.seed is None else c.seed])

    @classmethod
    def from_csv(cls, path) -> "CriticalValueTable":
        with open(path, newline="") as fh:
            return cls._read(fh)

    @classmethod
    def _read(cls, fh) -> "CriticalValueTable":
        cells = []
        for row in csv.DictReader(fh):
            cells.append(CriticalCell(float(row["level"]), int(row["n"]), float(row["theta"]),
                                      float(row["sn"]), float(row["tn"]), int(row["reps"]),
                                      int(row["seed"]) if row.get("seed") else None))
        return cls(cells)

    @classmethod
    def bundled(cls) -> "CriticalValueTable":
        """Bundled 10,000-replication tables (n in 23, 44 and 25..1000)."""
        ref = resources.files("frankcop").joinpath("data").joinpath("critical_values.csv")
        with ref.open("r", newline="") as fh:
            return cls._read(fh)

    def _row(self, stat: str, n: int, level: float):
        cells = sorted((c for c in self.cells
                        if c.n == n and abs(c.level - level) < 1e-9), key=lambda c: c.theta)
        return np.array([c.theta for c in cells]), np.array([getattr(c, stat) for c in cells])

    def _in_row(self, stat, n, theta, level) -> float:
        th, val = self._row(stat, n, level)
        if th.size == 0 or not th[0] - 1e-12 <= theta <= th[-1] + 1e-12:
            raise CoverageError(f"no {stat} coverage at n={n}, theta={theta:g}, level={level}")
        return float(np.interp(theta, th, val))

    def lookup(self, stat: str, n: int, theta: float, level: float) -> float:
        """Critical value of ``stat`` ("sn" or "tn") at ``(n, theta, level)``.

        Linear in theta within the bracketing n rows, then linear in n.

        Raises
        ------
        CoverageError
            When the request lies outside the tabulated n or theta range.
        """
        if stat not in ("sn", "tn"):
            raise ValueError("stat must be 'sn' or 'tn'")
        ns = sorted({c.n for c in self.cells if abs(c.level - level) < 1e-9})
        if not ns or not ns[0] <= n <= ns[-1]:
            raise CoverageError(f"no {stat} coverage at n={n}, level={level}")
        if n in ns:
            return self._in_row(stat, n, theta, level)
        k = int(np.searchsorted(ns, n))
        lo, hi = ns[k - 1], ns[k]
        a = self._in_row(stat, lo, theta, level)
        b = self._in_row(stat, hi, theta, level)
        return a + (b - a) * (n - lo) / (hi - lo)


# --- bootstrap -----------------------------------------------------------------------

def _boot_rep(x: np.ndarray, y: np.ndarray, seed: int, b: int) -> tuple[float, float, int]:
    rng = stream(seed, _BOOT_TAG, b)
    n = x.size
    redraws = 0
    while True:
        idx = rng.integers(0, n, n)
        if np.unique(np.column_stack([x[idx], y[idx]]), axis=0).shape[0] >= _MIN_DISTINCT_ROWS:
            break
        redraws += 1
    st = statistics(np.column_stack([x[idx], y[idx]]))
    return st.sn, st.tn, redraws


@dataclass(frozen=True)
class BootstrapResult:
    p_sn: float
    p_tn: float
    b: int
    redraws: int
    observed: Statistics


def bootstrap_pvalues(raw, b: int = 10_000, seed: int = 0,
                      threads: int | None = 1) -> BootstrapResult:
    """Row-resampling bootstrap p-values ``mean(stat* > stat_obs)``.

    Each resample is re-ranked and ``theta`` re-estimated.  Resamples with
    fewer than three distinct rows are redrawn and counted.
    """
    if b < 100:
        raise ValueError("b must be at least 100")
    x, y = _columns(raw)
    obs = statistics(np.column_stack([x, y]))
    fn = functools.partial(_boot_rep, np.asarray(x, float), np.asarray(y, float), int(seed))
    sims = np.array(indexed_map(fn, int(b), threads))
    return BootstrapResult(float(np.mean(sims[:, 0] > obs.sn)), float(np.mean(sims[:, 1] > obs.tn)),
                           int(b), int(sims[:, 2].sum()), obs)


def bootstrap_pvalue(raw, stat: str, b: int = 10_000, seed: int = 0,
                     threads: int | None = 1) -> float:
    """Bootstrap p-value of ``stat`` ("sn" or "tn")."""
    res = bootstrap_pvalues(raw, b, seed, threads)
    return {"sn": res.p_sn, "tn": res.p_tn}[stat.lower()]


# --- full test -------------------------------------------------------------------------

@dataclass(frozen=True)
class Reading:
    """Statistics compared against critical values read at ``theta_table``."""

    theta_table: float
    sn: float
    tn: float
    critical: dict
    rejected: dict


@dataclass(frozen=True)
class GofReport:
    """Outcome of a goodness-of-fit test.

    ``policy`` reads the tables at ``theta_use = |theta_hat|`` (after
    reflecting the data when ``reoriented``); ``signed`` reads them at the
    signed estimate.  ``critical`` and ``rejected`` map a level to
    ``{"sn": ..., "tn": ...}``.
    """

    n: int
    sn: float
    tn: float
    theta_hat: float
    theta_use: float
    reoriented: bool
    policy: Reading
    signed: Reading
    p_boot_sn: float | None = None
    p_boot_tn: float | None = None
    bootstrap_b: int | None = None
    bootstrap_redraws: int | None = None

    @property
    def critical_sn(self) -> float:
        return self.policy.critical[0.95]["sn"]

    @property
    def critical_tn(self) -> float:
        return self.policy.critical[0.95]["tn"]


def _reading(table: CriticalValueTable, n, theta_table, sn, tn, levels) -> Reading:
    crit, rej = {}, {}
    for lv in levels:
        c = {s: table.lookup(s, n, theta_table, lv) for s in ("sn", "tn")}
        crit[lv] = c
        rej[lv] = {"sn": sn > c["sn"], "tn": tn > c["tn"]}
    return Reading(float(theta_table), sn, tn, crit, rej)


def gof_test(raw, table: CriticalValueTable | None = None, levels=LEVELS,
             bootstrap: int | None = None, seed: int = 0,
             threads: int | None = 1) -> GofReport:
    """Observed statistics with table verdicts, plus bootstrap p-values on request."""
    table = CriticalValueTable.bundled() if table is None else table
    x, y = _columns(raw)
    n = x.size
    obs = statistics(np.column_stack([x, y]))
    theta_use, reoriented = theta_use_policy(obs.theta_hat)
    if reoriented:
        flipped = statistics(np.column_stack([x, -y]))
        policy = _reading(table, n, flipped.theta_hat, flipped.sn, flipped.tn, levels)
    else:
        policy = _reading(table, n, theta_use, obs.sn, obs.tn, levels)
    signed = _reading(table, n, obs.theta_hat, obs.sn, obs.tn, levels)
    boot = bootstrap_pvalues(raw, bootstrap, seed, threads) if bootstrap else None
    return GofReport(n, obs.sn, obs.tn, obs.theta_hat, theta_use, reoriented, policy, signed,
                     boot.p_sn if boot else None, boot.p_tn if boot else None,
                     boot.b if boot else None, boot.redraws if boot else None)


def load_table(path: str | Path | None) -> CriticalValueTable:
    return CriticalValueTable.bundled() if path is None else CriticalValueTable.from_csv(path)
