"""Balance diagnostics: weighted covariate differences, balance t-tests,
and the squared imbalance norm used to compare designs at pi = 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, HeterogeneousPi
from .numerics import normal_cdf

__all__ = [
    "BalanceReport",
    "compute_delta",
    "compute_imbalance_norm",
    "balance_tests",
    "balance_report",
]


@dataclass(frozen=True)
class BalanceReport:
    """Per-covariate balance statistics plus the squared imbalance norm.

    ``b_norm_sq`` is NaN when the assignment probabilities are not the
    homogeneous 1/2 benchmark for which the norm is defined.
    """

    delta: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    b_norm_sq: float


def _inputs(x, d, pi):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    d = np.asarray(getattr(d, "d", d), dtype=float).ravel()
    pi = np.asarray(pi, dtype=float).ravel()
    n = x.shape[0]
    if d.size != n or pi.size != n:
        raise DimensionMismatch(
            f"covariates have {n} rows, d has {d.size}, pi has {pi.size}"
        )
    return x, d, pi


def _per_unit_terms(x, d, pi):
    # X_ji d_i / pi_i - X_ji (1 - d_i) / (1 - pi_i), one column per covariate
    w = d / pi - (1.0 - d) / (1.0 - pi)
    return x * w[:, None]


def compute_delta(x, d, pi) -> np.ndarray:
    """Weighted treatment-control difference per covariate."""
    x, d, pi = _inputs(x, d, pi)
    return _per_unit_terms(x, d, pi).mean(axis=0)


def compute_imbalance_norm(x, d, pi=None) -> float:
    """Squared Euclidean norm of the group-mean differences at pi = 1/2.

    Equals ``sum_j ((2/n) sum_i X_ji (2 d_i - 1))^2``; defined only for the
    homogeneous pi = 1/2 benchmark (pass ``pi=None`` to assert that).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    d = np.asarray(getattr(d, "d", d), dtype=float).ravel()
    if pi is not None:
        pi = np.asarray(pi, dtype=float).ravel()
        if np.any(np.abs(pi - 0.5) > 1e-12):
            raise HeterogeneousPi("imbalance norm is defined for pi = 1/2 only")
    if d.size != x.shape[0]:
        raise DimensionMismatch(f"d has {d.size} entries, x has {x.shape[0]} rows")
    b = (2.0 / x.shape[0]) * x.T @ (2.0 * d - 1.0)
    return float(b @ b)


def balance_tests(x, d, pi) -> tuple[np.ndarray, np.ndarray]:
    """t-statistics and two-sided p-values for the per-covariate differences.

    The variance estimate is the sample variance of the per-unit weighted
    contributions.  A zero variance together with a zero difference (the
    exactly balanced case) reports t = 0, p = 1.
    """
    x, d, pi = _inputs(x, d, pi)
    n = x.shape[0]
    terms = _per_unit_terms(x, d, pi)
    delta = terms.mean(axis=0)
    var = terms.var(axis=0, ddof=1) if n > 1 else np.zeros(x.shape[1])
    t = np.zeros_like(delta)
    for j in range(delta.size):
        if var[j] > 0.0:
            t[j] = np.sqrt(n) * delta[j] / np.sqrt(var[j])
        elif delta[j] != 0.0:
            t[j] = np.inf if delta[j] > 0 else -np.inf
    p = np.array([2.0 * (1.0 - normal_cdf(abs(tj))) if np.isfinite(tj) else 0.0 for tj in t])
    p[(var <= 0.0) & (delta == 0.0)] = 1.0
    return t, np.clip(p, 0.0, 1.0)


def balance_report(x, d, pi) -> BalanceReport:
    """Full report: differences, tests, and the norm when pi = 1/2."""
    x, dv, piv = _inputs(x, d, pi)
    delta = compute_delta(x, dv, piv)
    t, p = balance_tests(x, dv, piv)
    if np.all(np.abs(piv - 0.5) <= 1e-12):
        bsq = compute_imbalance_norm(x, dv)
    else:
        bsq = float("nan")
    return BalanceReport(delta=delta, t_stats=t, p_values=p, b_norm_sq=bsq)
