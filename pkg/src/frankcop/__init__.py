"""Estimation and goodness-of-fit tools for the bivariate Frank copula."""

from .copula import (
    DomainError,
    cdf,
    density,
    invert_rho,
    invert_tau,
    k_cdf,
    k_density,
    kendall_tau,
    log_density,
    reflect,
    sample,
    spearman_rho,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "cdf",
    "density",
    "invert_rho",
    "invert_tau",
    "k_cdf",
    "k_density",
    "kendall_tau",
    "log_density",
    "reflect",
    "sample",
    "spearman_rho",
    "__version__",
]
