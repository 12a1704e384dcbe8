"""Dense linear-algebra and optimization primitives.

Everything here is deterministic, pure, and safe to call from multiple
threads.  All numerical cutoffs used across the package live in the
:class:`Tolerances` record so tests can pin them in one place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import dependence_vector
from .errors import (
    DimensionMismatch,
    DomainError,
    Infeasible,
    NoKernel,
    NumericalBreakdown,
    Unbounded,
)

__all__ = [
    "Tolerances",
    "DEFAULT_TOLERANCES",
    "LpProblem",
    "null_space_vector",
    "solve_ols",
    "solve_lp",
    "normal_cdf",
    "normal_quantile",
]


@dataclass(frozen=True)
class Tolerances:
    """Numerical cutoffs shared by all modules.

    pivot:            below this (relative) magnitude a pivot counts as zero,
                      i.e. a row/column is treated as linearly dependent.
    kernel_residual:  max allowed ``||A u||_inf / max(1, ||A||_inf)`` for a
                      returned null-space vector.
    lp_feasibility:   constraint violation allowed in a simplex solution.
    lp_optimality:    reduced-cost threshold for simplex termination.
    snap:             distance to {0, 1} at which a walk coordinate freezes.
    propensity_clip:  common-support bound c; probabilities must lie in
                      [c, 1 - c] for constraint building.
    conservation:     relative drift allowed in ``A pi`` during the walk.
    """

    pivot: float = 1e-10
    kernel_residual: float = 1e-9
    lp_feasibility: float = 1e-8
    lp_optimality: float = 1e-8
    snap: float = 1e-9
    propensity_clip: float = 0.01
    conservation: float = 1e-7


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class LpProblem:
    """min c'x  subject to  A x = b, x >= 0 (componentwise)."""

    objective: np.ndarray
    eq_constraints: np.ndarray
    eq_rhs: np.ndarray

    def validated(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = np.asarray(self.objective, dtype=float).ravel()
        a = np.asarray(self.eq_constraints, dtype=float)
        b = np.asarray(self.eq_rhs, dtype=float).ravel()
        if a.ndim != 2:
            raise DimensionMismatch("eq_constraints must be a 2-d matrix")
        if a.shape[1] != c.size:
            raise DimensionMismatch(
                f"objective length {c.size} != constraint columns {a.shape[1]}"
            )
        if a.shape[0] != b.size:
            raise DimensionMismatch(
                f"rhs length {b.size} != constraint rows {a.shape[0]}"
            )
        return c, a, b


def null_space_vector(a, tolerances: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Return one canonical null-space vector of a dense matrix.

    The vector satisfies ``||A u||_inf <= kernel_residual * max(1, ||A||_inf)``,
    has ``||u||_inf = 1``, and its first significant entry is positive, so the
    result is deterministic given ``a``.  Raises :class:`NoKernel` when the
    matrix has full column rank.
    """
    a2 = np.ascontiguousarray(a, dtype=np.float64)
    if a2.ndim != 2:
        raise DimensionMismatch("expected a 2-d matrix")
    if a2.shape[1] < 1:
        raise DimensionMismatch("matrix needs at least one column")
    found, u = dependence_vector(a2, tolerances.pivot)
    if not found:
        raise NoKernel(f"matrix {a2.shape} has full column rank")
    u = u / np.max(np.abs(u))
    first = int(np.nonzero(np.abs(u) > 1e-12)[0][0])
    if u[first] < 0.0:
        u = -u
    u = u + 0.0  # normalise any -0.0 entries
    if a2.shape[0] > 0:
        scale = max(1.0, float(np.max(np.abs(a2))))
        resid = float(np.max(np.abs(a2 @ u)))
        if resid > tolerances.kernel_residual * scale:
            raise NumericalBreakdown(
                f"null-space residual {resid:.3e} exceeds tolerance"
            )
    return u


def solve_ols(x, y, tolerances: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Least-squares coefficients via column-pivoted Householder QR.

    Minimises ``||y - X b||^2``; on rank deficiency (pivot below the
    ``pivot`` tolerance relative to the leading one) the minimum-norm
    solution is returned.
    """
    xm = np.array(x, dtype=float)
    yv = np.asarray(y, dtype=float).ravel()
    if xm.ndim != 2:
        raise DimensionMismatch("design matrix must be 2-d")
    n, k = xm.shape
    if yv.size != n:
        raise DimensionMismatch(f"y length {yv.size} != rows {n}")
    if n < k:
        raise DimensionMismatch(f"need rows >= columns, got {n} < {k}")
    r = xm.copy()
    qty = yv.copy()
    perm = np.arange(k)
    for j in range(k):
        norms = np.sqrt(np.sum(r[j:, j:] ** 2, axis=0))
        jmax = j + int(np.argmax(norms))
        if jmax != j:
            r[:, [j, jmax]] = r[:, [jmax, j]]
            perm[[j, jmax]] = perm[[jmax, j]]
        v = r[j:, j].copy()
        vnorm = math.sqrt(float(v @ v))
        if vnorm == 0.0:
            continue
        alpha = -vnorm if v[0] >= 0 else vnorm
        v[0] -= alpha
        vscale = math.sqrt(float(v @ v))
        if vscale > 0.0:
            v /= vscale
            r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
            qty[j:] -= 2.0 * v * float(v @ qty[j:])
        r[j, j] = alpha
        r[j + 1 :, j] = 0.0
    diag = np.abs(np.diag(r[:k, :k]))
    scale = max(1.0, diag[0] if diag.size else 1.0)
    rank = int(np.sum(diag > tolerances.pivot * scale))
    beta_p = np.zeros(k)
    if rank == k:
        for i in range(k - 1, -1, -1):
            beta_p[i] = (qty[i] - r[i, i + 1 :] @ beta_p[i + 1 :]) / r[i, i]
    elif rank > 0:
        # minimum-norm solution of the rank-deficient trapezoidal system
        bmat = r[:rank, :]
        rhs = qty[:rank]
        gram = bmat @ bmat.T
        beta_p = bmat.T @ np.linalg.solve(gram, rhs)
    beta = np.zeros(k)
    beta[perm] = beta_p
    return beta


def _simplex_iterate(t, basis, costs, tol, max_iter=200_000):
    """Run primal simplex on a tableau already in canonical form.

    ``t`` is (m, ncols + 1) with the rhs in the last column and identity
    columns at ``basis``; both are updated in place.  Entering columns are
    chosen by steepest reduced cost, falling back to Bland's smallest-index
    rule whenever pivots stay degenerate (so cycling is impossible); ties
    in the ratio test break toward the smallest basic-variable index.
    Returns the optimal objective value for ``costs``.
    """
    m = t.shape[0]
    red = costs - costs[basis] @ t[:, :-1]
    val = float(costs[basis] @ t[:, -1])
    degenerate_run = 0
    bland = False
    for _ in range(max_iter):
        if bland:
            cand = np.nonzero(red < -tol)[0]
            if cand.size == 0:
                return val
            enter = int(cand[0])
        else:
            enter = int(np.argmin(red))
            if red[enter] >= -tol:
                return val
        col = t[:, enter]
        pos = col > tol
        if not pos.any():
            raise Unbounded("objective unbounded below")
        ratios = np.full(m, np.inf)
        ratios[pos] = t[pos, -1] / col[pos]
        best = float(ratios.min())
        ties = np.nonzero(ratios <= best + 1e-12)[0]
        leave = int(ties[np.argmin(basis[ties])]) if ties.size > 1 else int(ties[0])
        if best <= 1e-12:
            degenerate_run += 1
            if degenerate_run > 2 * m + 10:
                bland = True
        else:
            degenerate_run = 0
            bland = False
        val += red[enter] * best
        piv = t[leave, enter]
        t[leave] /= piv
        colvals = t[:, enter].copy()
        colvals[leave] = 0.0
        t -= np.outer(colvals, t[leave])
        red = red - red[enter] * t[leave, :-1]
        basis[leave] = enter
    raise NumericalBreakdown("simplex iteration limit reached")


def solve_lp(problem: LpProblem, tolerances: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Solve a small dense equality-form LP with two-phase Bland simplex.

    Returns the optimal basic feasible solution.  Raises
    :class:`Infeasible` when no point satisfies the constraints within
    tolerance and :class:`Unbounded` when the objective has no minimum.
    """
    c, a, b = problem.validated()
    m, n = a.shape
    a = a.copy()
    b = b.copy()
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: drive artificial variables to zero
    t = np.zeros((m, n + m + 1))
    t[:, :n] = a
    t[:, n : n + m] = np.eye(m)
    t[:, -1] = b
    basis = np.arange(n, n + m)
    cost1 = np.zeros(n + m)
    cost1[n:] = 1.0
    val1 = _simplex_iterate(t, basis, cost1, tolerances.lp_optimality)
    # the phase-1 optimum is the total constraint violation; anything
    # clearly above roundoff means no feasible point exists
    if val1 > 1e-7 * max(1.0, float(np.max(np.abs(b)))):
        raise Infeasible(f"phase-1 objective {val1:.3e} > 0")

    # pivot any artificial still basic out of the basis, or drop its row
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n:
            row = t[i, :n]
            cand = np.nonzero(np.abs(row) > tolerances.lp_optimality)[0]
            if cand.size:
                enter = int(cand[0])
                piv = t[i, enter]
                t[i] /= piv
                colvals = t[:, enter].copy()
                colvals[i] = 0.0
                t -= np.outer(colvals, t[i])
                basis[i] = enter
            else:
                keep[i] = False
    t = t[keep]
    basis = basis[keep]

    # phase 2 on the original costs
    t = np.hstack([t[:, :n], t[:, -1:]])
    _simplex_iterate(t, basis, c, tolerances.lp_optimality)
    x = np.zeros(n)
    x[basis] = t[:, -1]
    x[np.abs(x) < 1e-15] = 0.0
    return x


_SQRT2 = math.sqrt(2.0)
_INV_SQRTPI = 1.0 / math.sqrt(math.pi)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _erf_series(z: float) -> float:
    # Maclaurin series; used for |z| <= 2 where it converges quickly
    term = z
    acc = z
    zsq = z * z
    n = 0
    while True:
        n += 1
        term *= -zsq / n
        contrib = term / (2 * n + 1)
        acc += contrib
        if abs(contrib) <= 1e-17 * abs(acc) + 1e-300:
            return 2.0 * _INV_SQRTPI * acc


def _erfc_cf(z: float) -> float:
    # Lentz continued fraction for erfc, accurate in the tail (z > 2)
    tiny = 1e-300
    f = z
    cc = f
    dd = 0.0
    for k in range(1, 300):
        ak = k / 2.0
        dd = z + ak * dd
        if dd == 0.0:
            dd = tiny
        cc = z + ak / cc
        if cc == 0.0:
            cc = tiny
        dd = 1.0 / dd
        delta = cc * dd
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-z * z) * _INV_SQRTPI / f


def normal_cdf(x: float) -> float:
    """Standard Gaussian distribution function, accurate in both tails."""
    z = abs(x) / _SQRT2
    if z <= 2.0:
        tail = 0.5 * (1.0 - _erf_series(z))
    else:
        tail = 0.5 * _erfc_cf(z)
    return tail if x < 0.0 else 1.0 - tail


# Rational initial guess for the Gaussian quantile (Acklam's coefficients),
# then Halley refinement against normal_cdf in the non-extreme range.
_QA = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
       1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_QB = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
       6.680131188771972e+01, -1.328068155288572e+01)
_QC = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
       -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_QD = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
       3.754408661907416e+00)


def normal_quantile(p: float) -> float:
    """Inverse of :func:`normal_cdf` on (0, 1)."""
    if not (0.0 < p < 1.0):
        raise DomainError(f"quantile needs p in (0, 1), got {p!r}")
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_QC[0] * q + _QC[1]) * q + _QC[2]) * q + _QC[3]) * q + _QC[4]) * q + _QC[5])
             / ((((_QD[0] * q + _QD[1]) * q + _QD[2]) * q + _QD[3]) * q + 1.0))
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = ((((((_QA[0] * r + _QA[1]) * r + _QA[2]) * r + _QA[3]) * r + _QA[4]) * r + _QA[5]) * q
             / (((((_QB[0] * r + _QB[1]) * r + _QB[2]) * r + _QB[3]) * r + _QB[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_QC[0] * q + _QC[1]) * q + _QC[2]) * q + _QC[3]) * q + _QC[4]) * q + _QC[5])
              / ((((_QD[0] * q + _QD[1]) * q + _QD[2]) * q + _QD[3]) * q + 1.0))
    if abs(x) < 8.0:
        for _ in range(2):
            err = normal_cdf(x) - p
            u = err * _SQRT2PI * math.exp(0.5 * x * x)
            x -= u / (1.0 + 0.5 * x * u)
    return x
