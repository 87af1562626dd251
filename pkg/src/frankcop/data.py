"""
Bivariate data ingestion and rank correlation estimates.

CSV files need a header row.  Cells equal to the below-detection-limit token
(default ``bdl``) are replaced by a per-column substitute value; a column
holding such a token without a rule is a data error.  Units are read from an
optional ``units.json`` sidecar in the same directory, never inferred.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np
from scipy import stats

from . import copula

#: substitutes for below-detection-limit readings (As in ppb, Cl in ppm)
DEFAULT_BDL_RULES: dict[str, float] = {"As": 4.0, "Cl": 0.01}
BUNDLED = ("north.csv", "south.csv")
UNITS_SIDECAR = "units.json"


class DataError(ValueError):
    """Input data is missing or malformed."""


@dataclass(frozen=True)
class BivariateSample:
    x: np.ndarray
    y: np.ndarray
    x_name: str = "x"
    y_name: str = "y"
    x_unit: str = ""
    y_unit: str = ""
    source: str = ""
    bdl_substitutions: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise DataError("x and y must be 1-D columns of equal length")
        if x.size < 2:
            raise DataError("need at least two observations")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("missing or non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.size)

    def take(self, index) -> "BivariateSample":
        """Rows at ``index`` (used for bootstrap resampling)."""
        return BivariateSample(self.x[index], self.y[index], self.x_name, self.y_name,
                               self.x_unit, self.y_unit, self.source, self.bdl_substitutions)


class CorrelationEstimates(NamedTuple):
    kendall: float
    spearman: float
    pearson: float | None = None


def resolve_path(path: str | Path) -> Path | resources.abc.Traversable:
    """Return ``path`` if it exists, else the bundled file of that name."""
    p = Path(path)
    if p.exists():
        return p
    if p.name in BUNDLED and len(p.parts) == 1:
        return resources.files("frankcop").joinpath("data").joinpath(p.name)
    raise DataError(f"no such file: {path}")


def _read_units(path) -> dict[str, str]:
    try:
        sidecar = path.parent / UNITS_SIDECAR if isinstance(path, Path) else \
            resources.files("frankcop").joinpath("data").joinpath(UNITS_SIDECAR)
        if sidecar.is_file():
            return json.loads(sidecar.read_text())
    except (OSError, ValueError):
        pass
    return {}


def _column(rows, name, rules, token) -> tuple[np.ndarray, int]:
    out = np.empty(len(rows))
    subs = 0
    for i, row in enumerate(rows):
        cell = (row.get(name) or "").strip()
        if cell.lower() == token.lower():
            if name not in rules:
                raise DataError(f"column {name!r} row {i + 1}: '{cell}' with no substitution rule")
            out[i] = rules[name]
            subs += 1
            continue
        try:
            out[i] = float(cell)
        except ValueError:
            raise DataError(f"column {name!r} row {i + 1}: cannot parse {cell!r}") from None
    return out, subs


def load_dataset(path, x: str, y: str, bdl_rules: Mapping[str, float] | None = None,
                 bdl_token: str = "bdl") -> BivariateSample:
    """Read columns ``x`` and ``y`` of a CSV file.

    Parameters
    ----------
    path : path-like
        CSV file; the bare names ``north.csv`` / ``south.csv`` fall back to
        the bundled groundwater data.
    x, y : str
        Column headers.
    bdl_rules : mapping, optional
        Column name to substitute value.  Defaults to ``DEFAULT_BDL_RULES``.

    Raises
    ------
    DataError
        Missing file or column, or an unparseable cell.
    """
    rules = DEFAULT_BDL_RULES if bdl_rules is None else dict(bdl_rules)
    src = resolve_path(path)
    with src.open("r", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    for col in (x, y):
        if col not in header:
            raise DataError(f"column {col!r} not in {header}")
    xs, nx = _column(rows, x, rules, bdl_token)
    ys, ny = _column(rows, y, rules, bdl_token)
    units = _read_units(src)
    return BivariateSample(xs, ys, x, y, units.get(x, ""), units.get(y, ""), str(path),
                           {x: nx, y: ny})


def load_bundled(region: str, x: str, y: str) -> BivariateSample:
    """Groundwater pair ``(x, y)`` for ``region`` in {"north", "south"}."""
    return load_dataset(f"{region.lower()}.csv", x, y)


# --- rank correlations ---------------------------------------------------------

def grades(values) -> np.ndarray:
    """Adjusted empirical cdf ``(#{X_k <= x} + 0.5) / (n + 1)``."""
    values = np.asarray(values, dtype=float)
    n = values.size
    return (stats.rankdata(values, method="max") + 0.5) / (n + 1)


def kendall_pairs(pairs, variant: str = "b") -> float:
    """Kendall's tau of the columns of an ``(n, 2)`` array.

    ``variant="b"`` adjusts the denominator for ties; ``variant="a"`` uses
    ``n(n-1)/2`` with tied pairs counting as neither concordant nor
    discordant.
    """
    pairs = np.asarray(pairs, dtype=float)
    x, y = pairs[:, 0], pairs[:, 1]
    if variant == "b":
        return float(stats.kendalltau(x, y, variant="b").statistic)
    if variant != "a":
        raise ValueError("variant must be 'a' or 'b'")
    n = x.size
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    return float(np.triu(dx * dy, 1).sum() / (n * (n - 1) / 2))


def spearman_pairs(pairs) -> float:
    """Spearman's rho (average ranks for ties) of an ``(n, 2)`` array."""
    pairs = np.asarray(pairs, dtype=float)
    return float(stats.spearmanr(pairs[:, 0], pairs[:, 1]).statistic)


def kendall_hat(s: BivariateSample, variant: str = "b") -> float:
    return kendall_pairs(np.column_stack([s.x, s.y]), variant)


def spearman_hat(s: BivariateSample) -> float:
    return spearman_pairs(np.column_stack([s.x, s.y]))


def pearson_hat(s: BivariateSample) -> float:
    return float(np.corrcoef(s.x, s.y)[0, 1])


def sample_correlations(s: BivariateSample, variant: str = "b") -> CorrelationEstimates:
    return CorrelationEstimates(kendall_hat(s, variant), spearman_hat(s), pearson_hat(s))


def parametric_correlations(theta_hat: float) -> CorrelationEstimates:
    """Kendall and Spearman correlations implied by the Frank parameter."""
    return CorrelationEstimates(float(copula.kendall_tau(theta_hat)),
                                float(copula.spearman_rho(theta_hat)))
