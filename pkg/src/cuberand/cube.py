"""The cube method: constraint construction, the flight phase, and the two
landing phases.

The flight phase walks the vector of assignment probabilities through the
null space of the constraint matrix until most coordinates hit 0 or 1; the
at most q units left over are resolved either by a small linear program
over all completions or by successively dropping constraints and resuming
the walk.  Both routes keep ``E[D_i] = pi_i`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .designs import Assignment
from .errors import (
    DimensionMismatch,
    DomainError,
    NumericalBreakdown,
    PropensityOutOfRange,
    TooManyUnresolved,
)
from .numerics import DEFAULT_TOLERANCES, LpProblem, Tolerances, solve_lp

__all__ = [
    "BalanceSpec",
    "ConstraintMatrix",
    "FlightState",
    "LandingPolicy",
    "build_constraints",
    "flight_phase",
    "inverse_covariance_cost",
    "landing_lp",
    "landing_lp_distribution",
    "landing_suppression",
    "CubeSampler",
    "cube_assign",
]

_HOMOGENEOUS_TOL = 1e-12


@dataclass(frozen=True)
class BalanceSpec:
    """Which balancing constraints to impose.

    ``moments`` is either one of ``"first"`` / ``"first_and_second"``
    applied to every covariate, or a sequence giving the choice per
    covariate.
    """

    include_fixed_size: bool = True
    include_group_constants: bool = True
    moments: str | Sequence[str] = "first"

    def moments_for(self, p: int) -> list[str]:
        if isinstance(self.moments, str):
            mom = [self.moments] * p
        else:
            mom = list(self.moments)
            # an empty list means "no moment constraints", even with
            # covariates present; anything else must cover every covariate
            if mom and len(mom) != p:
                raise DimensionMismatch(
                    f"moments given for {len(mom)} covariates, data has {p}"
                )
        for m in mom:
            if m not in ("first", "first_and_second"):
                raise ValueError(f"unknown moment spec {m!r}")
        return mom


@dataclass(frozen=True)
class ConstraintMatrix:
    """q x n constraint matrix; column i is Z_i / pi_i.

    ``z`` holds the raw balancing variables Z_i (used by the landing cost),
    ``row_labels`` names the surviving rows, and ``dropped_rows`` the labels
    removed by the collinearity filter.
    """

    a: np.ndarray
    z: np.ndarray
    pi: np.ndarray
    row_labels: tuple[str, ...]
    dropped_rows: tuple[str, ...] = ()

    @property
    def q(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]


@dataclass
class FlightState:
    """Probabilities and freeze mask at the end of (a stage of) the walk."""

    pi_t: np.ndarray
    frozen: np.ndarray
    steps_taken: int

    @property
    def unresolved(self) -> int:
        return int(np.sum(~self.frozen))


@dataclass(frozen=True)
class LandingPolicy:
    """How to resolve the units left after the flight phase.

    ``mode`` is ``"lp"`` (enumerate completions, optimize their sampling
    probabilities, used while the unresolved count is at most
    ``lp_max_unresolved``) or ``"suppress"`` (drop constraints in
    ``drop_order`` and resume the walk).  ``cost_matrix`` is the symmetric
    positive-definite weight of the quadratic landing cost; identity when
    ``None``.  ``drop_order`` defaults to the reverse of construction order.
    """

    mode: str = "lp"
    cost_matrix: np.ndarray | None = None
    drop_order: tuple[int, ...] | None = None
    lp_max_unresolved: int = 15

    def __post_init__(self):
        if self.mode not in ("lp", "suppress"):
            raise ValueError(f"unknown landing mode {self.mode!r}")


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatch("covariates must be a vector or an n x p matrix")
    return x


def _rank_filter(rows: list[np.ndarray], labels: list[str], pivot_tol: float):
    """Drop rows linearly dependent on the kept rows above them."""
    kept: list[np.ndarray] = []
    kept_labels: list[str] = []
    dropped: list[str] = []
    basis: list[np.ndarray] = []
    for row, label in zip(rows, labels):
        work = row.astype(float).copy()
        for b in basis:
            pivot_idx, pivot_val = b[0], b[1]
            coef = work[int(pivot_idx)] / pivot_val
            if coef != 0.0:
                work -= coef * b[2:]
        scale = max(1.0, float(np.max(np.abs(row))))
        j = int(np.argmax(np.abs(work)))
        if abs(work[j]) <= pivot_tol * scale:
            dropped.append(label)
            continue
        basis.append(np.concatenate(([float(j), work[j]], work)))
        kept.append(row)
        kept_labels.append(label)
    return kept, kept_labels, dropped


def build_constraints(
    x,
    pi,
    spec: BalanceSpec = BalanceSpec(),
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> ConstraintMatrix:
    """Assemble the q x n matrix with columns Z_i / pi_i.

    Row order: constant, pi/(1-pi), pi (fixed size), then per covariate the
    first and optionally second moment, each divided by (1-pi).  When all
    pi are equal those rows collapse by collinearity, so the reduced set
    (constant, X_j, X_j^2) is emitted directly.  Remaining collinear rows
    are removed by a rank filter so a later no-kernel signal means genuine
    exhaustion.
    """
    x = _as_matrix(x)
    n, p = x.shape
    pi = np.asarray(pi, dtype=float).ravel()
    if pi.size != n:
        raise DimensionMismatch(f"pi length {pi.size} != units {n}")
    c = tolerances.propensity_clip
    if np.any(pi < c) or np.any(pi > 1.0 - c):
        bad = int(np.argmax((pi < c) | (pi > 1.0 - c)))
        raise PropensityOutOfRange(
            f"pi={pi[bad]:g} for unit {bad} outside allowed range [{c:g}, {1 - c:g}]"
        )
    moments = spec.moments_for(p)
    rows: list[np.ndarray] = []
    labels: list[str] = []
    ones = np.ones(n)
    homogeneous = float(pi.max() - pi.min()) <= _HOMOGENEOUS_TOL
    if homogeneous:
        if spec.include_group_constants or spec.include_fixed_size:
            rows.append(ones)
            labels.append("const")
        for j, mom in enumerate(moments):
            rows.append(x[:, j].copy())
            labels.append(f"x{j + 1}")
            if mom == "first_and_second":
                rows.append(x[:, j] ** 2)
                labels.append(f"x{j + 1}^2")
    else:
        w = 1.0 / (1.0 - pi)
        if spec.include_group_constants:
            rows.append(ones)
            labels.append("const")
            rows.append(pi * w)
            labels.append("pi_ratio")
        if spec.include_fixed_size:
            rows.append(pi.copy())
            labels.append("pi")
        for j, mom in enumerate(moments):
            rows.append(x[:, j] * w)
            labels.append(f"x{j + 1}")
            if mom == "first_and_second":
                rows.append(x[:, j] ** 2 * w)
                labels.append(f"x{j + 1}^2")
    if not rows:
        raise ValueError("balance spec produced no constraints")
    kept, kept_labels, dropped = _rank_filter(rows, labels, tolerances.pivot)
    z = np.ascontiguousarray(np.vstack(kept))
    a = np.ascontiguousarray(z / pi[None, :])
    return ConstraintMatrix(
        a=a,
        z=z,
        pi=pi.copy(),
        row_labels=tuple(kept_labels),
        dropped_rows=tuple(dropped),
    )


def flight_phase(
    a,
    pi0,
    rng: np.random.Generator,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> FlightState:
    """Run the balancing walk from ``pi0`` until no kernel direction remains.

    On exit at most q units are unfrozen and ``A pi`` is unchanged up to
    tolerance.  The walk is a martingale step by step, so marginal
    treatment probabilities are preserved exactly.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch("constraint matrix must be 2-d")
    q, n = a.shape
    pi = np.asarray(pi0, dtype=np.float64).ravel().copy()
    if pi.size != n:
        raise DimensionMismatch(f"pi length {pi.size} != columns {n}")
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise PropensityOutOfRange("flight phase needs every pi strictly in (0, 1)")
    frozen = np.zeros(n, dtype=np.bool_)
    uniforms = rng.random(n + q + 2)
    steps, _, status = _kernels.flight_walk(
        a, pi, frozen, uniforms, 0, tolerances.snap, tolerances.pivot
    )
    if status == _kernels.WALK_STALLED:
        raise NumericalBreakdown("no coordinate froze; tolerance pathology")
    return FlightState(pi_t=pi, frozen=frozen, steps_taken=int(steps))


def _completion_bits(r: int) -> np.ndarray:
    codes = np.arange(2 ** r, dtype=np.int64)
    return ((codes[:, None] >> np.arange(r)) & 1).astype(float)


def _check_cost_matrix(m: np.ndarray, q: int) -> np.ndarray:
    """Validate symmetry and positive definiteness by elimination."""
    m = np.asarray(m, dtype=float)
    if m.shape != (q, q):
        raise DimensionMismatch(f"cost matrix must be {q}x{q}, got {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > 1e-10 * scale:
        raise DomainError("cost matrix must be symmetric")
    work = m.copy()
    for k in range(q):
        if work[k, k] <= 1e-12 * scale:
            raise DomainError("cost matrix must be positive definite")
        work[k + 1 :, k + 1 :] -= np.outer(work[k + 1 :, k], work[k, k + 1 :]) / work[k, k]
    return m


def inverse_covariance_cost(z: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Inverse of the empirical second-moment matrix of the q balancing rows.

    A ridge is added when elimination finds the moment matrix near
    singular, so the result is always a valid landing cost matrix.
    """
    z = np.asarray(z, dtype=float)
    q, n = z.shape
    gram = z @ z.T / max(1, n)
    try:
        _check_cost_matrix(gram, q)
    except DomainError:
        gram = gram + ridge * max(1.0, float(np.max(np.abs(gram)))) * np.eye(q)
    return np.linalg.inv(gram)


def landing_lp_distribution(
    state: FlightState,
    constraints: ConstraintMatrix,
    cost_matrix: np.ndarray | None = None,
    lp_max_unresolved: int = 15,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal sampling distribution over the 2^r completions.

    Enumerates every completion ``a`` of the unfrozen units, scores it with
    the quadratic cost ``v(a)' M v(a)`` where ``v(a) = sum Z_i (a_i - pi*_i)``,
    and solves the LP that minimizes expected cost subject to keeping each
    unit's marginal at ``pi*_i``.  Returns ``(completions, probabilities)``.
    """
    unfrozen = ~state.frozen
    r = int(unfrozen.sum())
    if r > lp_max_unresolved:
        raise TooManyUnresolved(f"{r} unresolved units exceed limit {lp_max_unresolved}")
    if r == 0:
        return np.zeros((1, 0)), np.ones(1)
    z_unf = constraints.z[:, unfrozen]
    pi_star = state.pi_t[unfrozen]
    q = constraints.q
    m = np.eye(q) if cost_matrix is None else _check_cost_matrix(cost_matrix, q)
    bits = _completion_bits(r)
    v = (bits - pi_star[None, :]) @ z_unf.T
    cost = np.einsum("ij,jk,ik->i", v, m, v)
    eq = np.vstack([np.ones(bits.shape[0]), bits.T])
    rhs = np.concatenate(([1.0], pi_star))
    prob = solve_lp(LpProblem(cost, eq, rhs), tolerances)
    prob = np.clip(prob, 0.0, None)
    prob /= prob.sum()
    return bits, prob


def landing_lp(
    state: FlightState,
    constraints: ConstraintMatrix,
    cost_matrix: np.ndarray | None,
    rng: np.random.Generator,
    lp_max_unresolved: int = 15,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> Assignment:
    """Resolve the unfrozen units by sampling from the optimal completion mix."""
    bits, prob = landing_lp_distribution(
        state, constraints, cost_matrix, lp_max_unresolved, tolerances
    )
    d = np.where(state.pi_t > 0.5, 1, 0).astype(np.int8)
    unfrozen = ~state.frozen
    r = int(unfrozen.sum())
    if r > 0:
        pick = int(np.searchsorted(np.cumsum(prob), rng.random(), side="right"))
        pick = min(pick, bits.shape[0] - 1)
        d[unfrozen] = bits[pick].astype(np.int8)
    return Assignment(
        d=d, design_name="cube", landing_units=r, landing_mode="lp" if r else None
    )


def landing_suppression(
    state: FlightState,
    constraints: ConstraintMatrix,
    drop_order: Sequence[int] | None,
    rng: np.random.Generator,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> Assignment:
    """Drop constraints one at a time and resume the walk until all frozen.

    ``drop_order`` lists constraint row indices in the order they may be
    sacrificed; default is the reverse of construction order.  Marginals
    ``E[D_i] = pi*_i`` survive every stage because each resumed walk is
    still a martingale.
    """
    q = constraints.q
    order = list(range(q - 1, -1, -1)) if drop_order is None else list(drop_order)
    if sorted(order) != list(range(q)):
        raise DimensionMismatch("drop_order must be a permutation of constraint rows")
    pi = state.pi_t.copy()
    frozen = state.frozen.copy()
    r0 = int(np.sum(~frozen))
    active = list(range(q))
    steps = state.steps_taken
    drop_queue = [row for row in order if row in active]
    while np.any(~frozen):
        if drop_queue:
            active.remove(drop_queue.pop(0))
        elif active:
            active = []
        a_red = (
            np.ascontiguousarray(constraints.a[active])
            if active
            else np.zeros((0, constraints.n))
        )
        qr = a_red.shape[0]
        uniforms = rng.random(constraints.n + qr + 2)
        nsteps, _, status = _kernels.flight_walk(
            a_red, pi, frozen, uniforms, 0, tolerances.snap, tolerances.pivot
        )
        steps += int(nsteps)
        if status == _kernels.WALK_STALLED:
            raise NumericalBreakdown("suppression stage stalled")
        if not active and np.any(~frozen):
            raise NumericalBreakdown("walk left units unfrozen with no constraints")
    d = np.where(pi > 0.5, 1, 0).astype(np.int8)
    return Assignment(
        d=d, design_name="cube", landing_units=r0, landing_mode="suppress" if r0 else None
    )


class CubeSampler:
    """Reusable sampler: constraints are built once, draws are cheap.

    Useful when many draws share the same covariates, probabilities, and
    policy (Monte Carlo loops, randomization inference).
    """

    def __init__(
        self,
        x,
        pi,
        spec: BalanceSpec = BalanceSpec(),
        policy: LandingPolicy = LandingPolicy(),
        tolerances: Tolerances = DEFAULT_TOLERANCES,
    ):
        self.constraints = build_constraints(x, pi, spec, tolerances)
        self.policy = policy
        self.tolerances = tolerances

    def draw(self, rng: np.random.Generator) -> Assignment:
        cm = self.constraints
        state = flight_phase(cm.a, cm.pi, rng, self.tolerances)
        r = state.unresolved
        if r == 0:
            d = np.where(state.pi_t > 0.5, 1, 0).astype(np.int8)
            return Assignment(d=d, design_name="cube", landing_units=0)
        pol = self.policy
        if pol.mode == "lp" and r <= pol.lp_max_unresolved:
            return landing_lp(
                state, cm, pol.cost_matrix, rng, pol.lp_max_unresolved, self.tolerances
            )
        return landing_suppression(state, cm, pol.drop_order, rng, self.tolerances)


def cube_assign(
    x,
    pi,
    spec: BalanceSpec = BalanceSpec(),
    policy: LandingPolicy = LandingPolicy(),
    rng: np.random.Generator | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> Assignment:
    """Constraint building, flight phase, and landing in one call.

    The landing runs the completion LP when at most ``lp_max_unresolved``
    units are left (and the policy allows it), otherwise constraint
    suppression.  ``landing_units`` on the result records how many units
    the landing resolved.
    """
    if rng is None:
        raise ValueError("cube_assign needs an explicit random stream")
    return CubeSampler(x, pi, spec, policy, tolerances).draw(rng)
