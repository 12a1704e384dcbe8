"""Hot numeric kernels: null-space elimination and the balancing walk.

The two inner loops that dominate Monte Carlo runtime live here as plain
Python functions over NumPy arrays.  When numba is importable (and the
``CUBERAND_DISABLE_NUMBA`` environment variable is unset) they are compiled
with ``@njit(cache=True, nogil=True)``; otherwise the interpreted versions
are used unchanged.  Both paths execute the identical sequence of IEEE
operations, so results are bit-for-bit the same either way — see
``benchmarks/bench_flight.py`` for the speed comparison.

Walk status codes returned by :func:`flight_walk`:

* ``WALK_ALL_FROZEN`` — every coordinate reached 0 or 1.
* ``WALK_NO_KERNEL``  — the active column block has full column rank;
  the walk cannot continue and the remaining units go to the landing step.
* ``WALK_STALLED``    — no coordinate froze for too many consecutive steps
  (tolerance pathology; callers raise ``NumericalBreakdown``).
"""

from __future__ import annotations

import os

import numpy as np

WALK_ALL_FROZEN = 0
WALK_NO_KERNEL = 1
WALK_STALLED = 2

_TINY = 1e-14


def _dependence_vector(b, pivot_tol):
    """Find u != 0 with b @ u ~ 0 for a dense (q, r) matrix.

    Gaussian elimination with partial pivoting on the transpose: rows of
    ``b.T`` (one per column of ``b``) are reduced against an identity
    history block.  The first row whose data part collapses below the
    pivot threshold yields the dependence coefficients.  Deterministic
    given ``b``.  Returns ``(found, u)``; ``u`` is unnormalised.
    """
    q = b.shape[0]
    r = b.shape[1]
    w = np.zeros((r, q + r))
    scale = 1.0
    for i in range(r):
        for j in range(q):
            v = b[j, i]
            w[i, j] = v
            if abs(v) > scale:
                scale = abs(v)
        w[i, q + i] = 1.0
    thresh = pivot_tol * scale
    used = np.zeros(r, np.bool_)
    for col in range(q):
        best = -1
        bestv = thresh
        for i in range(r):
            if not used[i]:
                a = abs(w[i, col])
                if a > bestv:
                    bestv = a
                    best = i
        if best < 0:
            continue
        used[best] = True
        piv = w[best, col]
        for i in range(r):
            if i != best and not used[i] and w[i, col] != 0.0:
                f = w[i, col] / piv
                for c2 in range(col, q + r):
                    w[i, c2] -= f * w[best, c2]
                w[i, col] = 0.0
    u = np.zeros(r)
    for i in range(r):
        if not used[i]:
            for j in range(r):
                u[j] = w[i, q + j]
            return True, u
    return False, u


def _flight_walk(a, pi, frozen, uniforms, ustart, snap_tol, pivot_tol):
    """Run the balancing walk in place until no kernel direction remains.

    ``a`` is the (q, n) constraint matrix; ``pi`` and ``frozen`` are updated
    in place.  Each step works on the first ``q + 1`` unfrozen coordinates:
    a null-space direction of that column block is extended by zeros, the
    two maximal step sizes that keep ``pi`` inside the unit cube are
    computed, and one of the two endpoint moves is taken with the
    probabilities that make the walk a martingale.  Coordinates landing
    within ``snap_tol`` of 0 or 1 are snapped and frozen.

    One uniform from ``uniforms`` (starting at ``ustart``) is consumed per
    step.  Returns ``(steps, next_cursor, status)``.
    """
    q = a.shape[0]
    n = a.shape[1]
    width = q + 1
    act = np.empty(width, np.int64)
    ucur = ustart
    steps = 0
    stall = 0
    while True:
        r = 0
        for i in range(n):
            if not frozen[i]:
                act[r] = i
                r += 1
                if r == width:
                    break
        if r == 0:
            return steps, ucur, WALK_ALL_FROZEN
        sub = np.empty((q, r))
        for j in range(r):
            cj = act[j]
            for i in range(q):
                sub[i, j] = a[i, cj]
        found, u = _dependence_vector(sub, pivot_tol)
        if not found:
            return steps, ucur, WALK_NO_KERNEL
        lam_up = np.inf
        lam_dn = np.inf
        for j in range(r):
            uj = u[j]
            pj = pi[act[j]]
            if uj > _TINY:
                hi = (1.0 - pj) / uj
                lo = pj / uj
            elif uj < -_TINY:
                hi = pj / (-uj)
                lo = (1.0 - pj) / (-uj)
            else:
                continue
            if hi < lam_up:
                lam_up = hi
            if lo < lam_dn:
                lam_dn = lo
        if not (lam_up < np.inf and lam_dn < np.inf):
            return steps, ucur, WALK_STALLED
        if ucur >= uniforms.shape[0]:
            # buffer sized for one freeze per step; running out means the
            # walk kept stepping without freezing anything
            return steps, ucur, WALK_STALLED
        t = uniforms[ucur]
        ucur += 1
        if t * (lam_up + lam_dn) < lam_dn:
            lam = lam_up
        else:
            lam = -lam_dn
        froze = False
        for j in range(r):
            jj = act[j]
            v = pi[jj] + lam * u[j]
            if v <= snap_tol:
                pi[jj] = 0.0
                frozen[jj] = True
                froze = True
            elif v >= 1.0 - snap_tol:
                pi[jj] = 1.0
                frozen[jj] = True
                froze = True
            else:
                pi[jj] = v
        steps += 1
        if froze:
            stall = 0
        else:
            stall += 1
            if stall >= q + 1:
                return steps, ucur, WALK_STALLED


def _env_disabled() -> bool:
    return os.environ.get("CUBERAND_DISABLE_NUMBA", "").strip().lower() in (
        "1",
        "true",
        "yes",
        "on",
    )


NUMBA_ENABLED = False
if not _env_disabled():
    try:
        from numba import njit

        _dependence_vector = njit(cache=True, nogil=True)(_dependence_vector)
        _flight_walk = njit(cache=True, nogil=True)(_flight_walk)
        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        pass

dependence_vector = _dependence_vector
flight_walk = _flight_walk
