"""Baseline randomization designs: coin toss, complete randomization,
quantile-stratified randomization, and matched pairs.

Every design is pure given an explicit random stream; concurrent callers
must pass distinct streams (see :mod:`cuberand.rng`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidGroupSize,
    InvalidProbability,
    OddSampleSize,
)

__all__ = [
    "Assignment",
    "StrataPartition",
    "coin_toss",
    "complete_randomization",
    "stratify_by_quantiles",
    "stratified_assign",
    "matched_pairs",
]


@dataclass(frozen=True)
class Assignment:
    """A realized treatment vector with provenance.

    ``landing_units`` is the number of units resolved after the balancing
    walk and ``landing_mode`` how they were resolved (both trivial for the
    baseline designs); ``seed`` is stamped by callers that know the master
    seed, ``None`` otherwise.
    """

    d: np.ndarray
    design_name: str
    seed: int | None = None
    landing_units: int = 0
    landing_mode: str | None = None

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.int8)
        if not np.all((d == 0) | (d == 1)):
            raise InvalidProbability("assignment entries must be 0 or 1")
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.size

    @property
    def n_treated(self) -> int:
        return int(self.d.sum())


@dataclass(frozen=True)
class StrataPartition:
    """Stratum id per unit; ids cover 0..stratum_count-1 with no gaps."""

    labels: np.ndarray
    stratum_count: int = field(default=0)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        count = self.stratum_count or (int(labels.max()) + 1 if labels.size else 0)
        if labels.size and (labels.min() < 0 or labels.max() >= count):
            raise DimensionMismatch("stratum labels out of range")
        present = np.unique(labels)
        if present.size != count:
            raise DimensionMismatch("stratum ids must cover 0..count-1 with no gaps")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "stratum_count", count)

    @property
    def n(self) -> int:
        return self.labels.size


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatch("covariates must be a vector or an n x p matrix")
    return x


def _partial_shuffle_pick(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """First k entries of a Fisher-Yates shuffle of range(n)."""
    idx = np.arange(n)
    for i in range(k):
        j = i + int(rng.integers(0, n - i))
        idx[i], idx[j] = idx[j], idx[i]
    return idx[:k]


def coin_toss(pi, rng: np.random.Generator) -> Assignment:
    """Independent Bernoulli(pi_i) draws per unit."""
    pi = np.asarray(pi, dtype=float).ravel()
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise InvalidProbability("coin toss needs every pi in (0, 1)")
    d = (rng.random(pi.size) < pi).astype(np.int8)
    return Assignment(d=d, design_name="ct")


def complete_randomization(n: int, n_treated: int, rng: np.random.Generator) -> Assignment:
    """Uniformly random subset of exactly ``n_treated`` units treated."""
    if not 0 < n_treated < n:
        raise InvalidGroupSize(f"need 0 < n_treated < n, got {n_treated} of {n}")
    d = np.zeros(n, dtype=np.int8)
    d[_partial_shuffle_pick(n, n_treated, rng)] = 1
    return Assignment(d=d, design_name="cr")


def stratify_by_quantiles(x, ell: int) -> StrataPartition:
    """Cut each covariate at its empirical j/ell quantiles and intersect.

    The cut for level j is the order statistic at index ``ceil(n*j/ell)``
    (1-based); a value equal to a cut goes to the lower cell.  Empty cells
    are dropped and ids compacted in lexicographic cell-tuple order.
    """
    x = _as_matrix(x)
    n, p = x.shape
    if ell < 2:
        raise DimensionMismatch("need ell >= 2")
    if n < 1:
        raise DimensionMismatch("need at least one unit")
    cells = np.zeros((n, p), dtype=np.int64)
    for k in range(p):
        col = np.sort(x[:, k])
        # order statistic at ceil(n j / ell), 1-based, in exact integer math
        cut_idx = [-(-n * j // ell) - 1 for j in range(1, ell)]
        cuts = col[cut_idx]
        # count of cuts strictly below the value = cell id, so ties go low
        cells[:, k] = np.searchsorted(cuts, x[:, k], side="left")
    order = np.lexsort(cells.T[::-1])
    labels = np.empty(n, dtype=np.int64)
    current = -1
    prev = None
    for i in order:
        key = tuple(cells[i])
        if key != prev:
            current += 1
            prev = key
        labels[i] = current
    return StrataPartition(labels=labels, stratum_count=current + 1)


def stratified_assign(partition: StrataPartition, rng: np.random.Generator) -> Assignment:
    """Within each stratum of size m treat floor(m/2) or floor((m+1)/2) units.

    Odd strata choose between the two counts with a fair coin, then the
    treated subset is uniform within the stratum.
    """
    labels = partition.labels
    d = np.zeros(labels.size, dtype=np.int8)
    for s in range(partition.stratum_count):
        members = np.nonzero(labels == s)[0]
        m = members.size
        k = m // 2
        if m % 2 == 1 and rng.random() < 0.5:
            k += 1
        if k > 0:
            picked = _partial_shuffle_pick(m, k, rng)
            d[members[picked]] = 1
    return Assignment(d=d, design_name="stratified")


def greedy_pairs(x) -> np.ndarray:
    """Greedy nearest-neighbour pairing as an (n/2, 2) index array.

    Units are processed in increasing order of the covariate with the
    largest variance (ties by index); each still-unpaired unit grabs its
    nearest unpaired neighbour in Euclidean distance.
    """
    x = _as_matrix(x)
    n = x.shape[0]
    if n % 2 != 0:
        raise OddSampleSize(f"matched pairs needs even n, got {n}")
    variances = x.var(axis=0)
    lead = int(np.argmax(variances))
    order = np.lexsort((np.arange(n), x[:, lead]))
    paired = np.zeros(n, dtype=bool)
    pairs = np.empty((n // 2, 2), dtype=np.int64)
    k = 0
    for i in order:
        if paired[i]:
            continue
        paired[i] = True
        dist = np.sum((x - x[i]) ** 2, axis=1)
        dist[paired] = np.inf
        j = int(np.argmin(dist))
        paired[j] = True
        pairs[k, 0] = i
        pairs[k, 1] = j
        k += 1
    return pairs


def matched_pairs(x, rng: np.random.Generator) -> Assignment:
    """Greedy nearest-neighbour pairing, one treated unit per pair.

    Pairing from :func:`greedy_pairs`; exactly one unit per pair is
    treated, chosen by fair coin, so group sizes are fixed at n/2.
    """
    x = _as_matrix(x)
    pairs = greedy_pairs(x)
    d = np.zeros(x.shape[0], dtype=np.int8)
    for i, j in pairs:
        if rng.random() < 0.5:
            d[i] = 1
        else:
            d[j] = 1
    return Assignment(d=d, design_name="mp")
