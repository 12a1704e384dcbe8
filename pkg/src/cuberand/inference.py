"""Randomization-based inference under the strong null.

The reference distribution is obtained by re-drawing assignments from the
same balanced design that produced the data; the observed draw is counted
in both numerator and denominator (the add-one convention), which keeps
the test valid at any finite number of draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import BalanceSpec, CubeSampler, LandingPolicy
from .errors import DimensionMismatch, DomainError
from .estimators import hajek, horvitz_thompson
from .numerics import DEFAULT_TOLERANCES, Tolerances

__all__ = ["RandomizationTestResult", "randomization_test"]

_STATISTICS = {
    "abs_ht": lambda y, d, pi: abs(horvitz_thompson(y, d, pi)),
    "abs_hajek": lambda y, d, pi: abs(hajek(y, d, pi)),
}


@dataclass(frozen=True)
class RandomizationTestResult:
    statistic_observed: float
    statistics_resampled: np.ndarray
    p_value: float
    b: int


def randomization_test(
    y,
    d,
    x,
    pi,
    spec: BalanceSpec = BalanceSpec(),
    policy: LandingPolicy = LandingPolicy(),
    b: int = 200,
    statistic: str = "abs_ht",
    rng: np.random.Generator | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> RandomizationTestResult:
    """Fisher-style test of the strong null by re-drawing balanced assignments.

    Holds ``y`` fixed, draws ``b - 1`` fresh assignments with the same
    covariates, probabilities, and landing policy, and recomputes the
    statistic for each.  The p-value is
    ``(1 + #{resampled >= observed}) / b``, so it always lies in
    ``[1/b, 1]``.  Resampled statistics are stored sorted.
    """
    if b < 20:
        raise DomainError(f"need b >= 20 draws, got {b}")
    if statistic not in _STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}")
    if rng is None:
        raise ValueError("randomization_test needs an explicit random stream")
    y = np.asarray(y, dtype=float).ravel()
    dv = np.asarray(getattr(d, "d", d), dtype=float).ravel()
    if dv.size != y.size:
        raise DimensionMismatch("y and d lengths differ")
    stat = _STATISTICS[statistic]
    observed = stat(y, dv, pi)
    sampler = CubeSampler(x, pi, spec, policy, tolerances)
    resampled = np.empty(b - 1)
    for i in range(b - 1):
        redraw = sampler.draw(rng)
        resampled[i] = stat(y, redraw.d, pi)
    resampled.sort()
    exceed = int(np.sum(resampled >= observed))
    p_value = (1 + exceed) / b
    return RandomizationTestResult(
        statistic_observed=float(observed),
        statistics_resampled=resampled,
        p_value=float(p_value),
        b=b,
    )
