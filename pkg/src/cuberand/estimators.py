"""Treatment-effect estimators and asymptotic inference.

Point estimators: inverse-probability weighting (Horvitz-Thompson), its
ratio-normalized variant (Hajek), and OLS with stratum fixed effects.  The
variance estimator regresses each arm's outcomes on its balancing
regressors and recombines fitted contrasts and residuals; confidence
intervals are the usual Gaussian ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .designs import StrataPartition
from .errors import (
    DimensionMismatch,
    DomainError,
    EmptyGroup,
    InsufficientData,
    NoIdentifiedStrata,
)
from .numerics import DEFAULT_TOLERANCES, Tolerances, normal_quantile, solve_ols

__all__ = [
    "EstimateResult",
    "horvitz_thompson",
    "hajek",
    "strata_fe_estimate",
    "StrataFeFit",
    "strata_fixed_effects",
    "build_regressors",
    "pate_variance",
    "confidence_interval",
    "estimate_with_ci",
]


@dataclass(frozen=True)
class EstimateResult:
    """Point estimate with variance, confidence interval, and provenance."""

    theta_hat: float
    variance_hat: float
    ci_low: float
    ci_high: float
    kind: str
    alpha: float
    dropped_strata: int = 0


def _vectors(y, d, pi=None):
    y = np.asarray(y, dtype=float).ravel()
    d = np.asarray(getattr(d, "d", d), dtype=float).ravel()
    if d.size != y.size:
        raise DimensionMismatch(f"y has {y.size} entries, d has {d.size}")
    if pi is None:
        return y, d
    pi = np.asarray(pi, dtype=float).ravel()
    if pi.size != y.size:
        raise DimensionMismatch(f"pi has {pi.size} entries, y has {y.size}")
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise DomainError("pi must lie strictly inside (0, 1)")
    return y, d, pi


def horvitz_thompson(y, d, pi) -> float:
    """Inverse-probability-weighted mean difference."""
    y, d, pi = _vectors(y, d, pi)
    return float(np.mean(y * d / pi - y * (1.0 - d) / (1.0 - pi)))


def hajek(y, d, pi) -> float:
    """Ratio-normalized weighted mean difference.

    With homogeneous pi this is the plain difference in group means.
    """
    y, d, pi = _vectors(y, d, pi)
    wt = d / pi
    wc = (1.0 - d) / (1.0 - pi)
    st = wt.sum()
    sc = wc.sum()
    if st <= 0.0 or sc <= 0.0:
        raise EmptyGroup("both groups must be non-empty")
    return float((y * wt).sum() / st - (y * wc).sum() / sc)


@dataclass(frozen=True)
class StrataFeFit:
    theta_hat: float
    dropped_strata: int
    used_strata: int


def strata_fixed_effects(y, d, partition: StrataPartition) -> StrataFeFit:
    """OLS of outcome on treatment plus stratum indicators.

    Strata lacking a treated or a control unit identify nothing and are
    dropped; their count is surfaced on the fit.
    """
    y, d = _vectors(y, d)
    labels = partition.labels
    if labels.size != y.size:
        raise DimensionMismatch("partition size differs from outcome length")
    usable = []
    for s in range(partition.stratum_count):
        members = labels == s
        ds = d[members]
        if ds.size and 0 < ds.sum() < ds.size:
            usable.append(s)
    dropped = partition.stratum_count - len(usable)
    if not usable:
        raise NoIdentifiedStrata("every stratum lacks a treated or control unit")
    mask = np.isin(labels, usable)
    ys = y[mask]
    ds = d[mask]
    ls = labels[mask]
    design = np.zeros((ys.size, 1 + len(usable)))
    design[:, 0] = ds
    for col, s in enumerate(usable):
        design[ls == s, 1 + col] = 1.0
    beta = solve_ols(design, ys)
    return StrataFeFit(theta_hat=float(beta[0]), dropped_strata=dropped, used_strata=len(usable))


def strata_fe_estimate(y, d, partition: StrataPartition) -> float:
    """Treatment coefficient from the stratum fixed-effects regression."""
    return strata_fixed_effects(y, d, partition).theta_hat


def build_regressors(x, pi) -> tuple[np.ndarray, np.ndarray]:
    """Balancing regressors (Z1, Z0) for the variance estimator.

    Heterogeneous pi: Z1 = (1, pi/(1-pi), pi, X/(1-pi)) and
    Z0 = ((1-pi)/pi) * Z1.  Homogeneous pi collapses both to (1, X).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    pi = np.asarray(pi, dtype=float).ravel()
    n = x.shape[0]
    if pi.size != n:
        raise DimensionMismatch(f"pi has {pi.size} entries, x has {n} rows")
    ones = np.ones((n, 1))
    if float(pi.max() - pi.min()) <= 1e-12:
        z1 = np.hstack([ones, x])
        return z1, z1.copy()
    w = 1.0 / (1.0 - pi)
    z1 = np.hstack([ones, (pi * w)[:, None], pi[:, None], x * w[:, None]])
    z0 = z1 * ((1.0 - pi) / pi)[:, None]
    return z1, z0


def pate_variance(
    y,
    d,
    pi,
    z1,
    z0,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Variance estimate for the population effect of the weighted estimator.

    Fits each arm's outcomes on its regressors, then combines the sample
    variance of the fitted contrast with the weighted residual sums:

        (1/n) [ Var(Z1 b1 - Z0 b0)
                + (1/n) sum e1_i^2 d_i / pi_i^2
                + (1/n) sum e0_i^2 (1 - d_i) / (1 - pi_i)^2 ]
    """
    y, d, pi = _vectors(y, d, pi)
    z1 = np.asarray(z1, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    if z1.ndim == 1:
        z1 = z1[:, None]
    if z0.ndim == 1:
        z0 = z0[:, None]
    n = y.size
    if z1.shape[0] != n or z0.shape[0] != n:
        raise DimensionMismatch("regressor rows must match outcome length")
    treated = d == 1.0
    control = ~treated
    if treated.sum() < z1.shape[1] or control.sum() < z0.shape[1]:
        raise InsufficientData(
            f"need >= {z1.shape[1]} treated and >= {z0.shape[1]} control units"
        )
    b1 = solve_ols(z1[treated], y[treated], tolerances)
    b0 = solve_ols(z0[control], y[control], tolerances)
    contrast = z1 @ b1 - z0 @ b0
    var_contrast = float(contrast.var(ddof=1)) if n > 1 else 0.0
    e1 = y[treated] - z1[treated] @ b1
    e0 = y[control] - z0[control] @ b0
    t1 = float(np.sum(e1 ** 2 / pi[treated] ** 2)) / n
    t0 = float(np.sum(e0 ** 2 / (1.0 - pi[control]) ** 2)) / n
    return (var_contrast + t1 + t0) / n


def confidence_interval(theta_hat: float, variance_hat: float, alpha: float) -> tuple[float, float]:
    """Symmetric Gaussian interval theta_hat +/- z_{1-alpha/2} sqrt(V)."""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must be in (0, 1), got {alpha!r}")
    if variance_hat < 0.0:
        raise DomainError("variance must be nonnegative")
    half = normal_quantile(1.0 - alpha / 2.0) * float(np.sqrt(variance_hat))
    return theta_hat - half, theta_hat + half


def estimate_with_ci(y, d, pi, x=None, kind: str = "horvitz_thompson",
                     alpha: float = 0.05) -> EstimateResult:
    """Convenience wrapper: point estimate, variance, and interval in one."""
    if kind == "horvitz_thompson":
        theta = horvitz_thompson(y, d, pi)
    elif kind == "hajek":
        theta = hajek(y, d, pi)
    else:
        raise ValueError(f"unknown estimator kind {kind!r}")
    n = np.asarray(y).size
    if x is None:
        x = np.zeros((n, 0))
    z1, z0 = build_regressors(x, pi)
    var = pate_variance(y, d, pi, z1, z0)
    low, high = confidence_interval(theta, var, alpha)
    return EstimateResult(
        theta_hat=theta,
        variance_hat=var,
        ci_low=low,
        ci_high=high,
        kind=kind,
        alpha=alpha,
    )
