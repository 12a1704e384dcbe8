"""Data-generating processes and the Monte Carlo experiment harness.

Experiments are replicated with one named random stream per replication
(see :mod:`cuberand.rng`), so results are reproducible bit for bit and do
not depend on how replications are scheduled across worker threads.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .balance import compute_imbalance_norm
from .cube import BalanceSpec, CubeSampler, LandingPolicy
from .designs import (
    coin_toss,
    complete_randomization,
    matched_pairs,
    stratified_assign,
    stratify_by_quantiles,
)
from .errors import DimensionMismatch
from .estimators import (
    build_regressors,
    confidence_interval,
    horvitz_thompson,
    pate_variance,
)
from .rng import stream

__all__ = [
    "SimpleDgpConfig",
    "DgpSample",
    "ExperimentResult",
    "make_design",
    "DESIGN_NAMES",
    "run_imbalance_experiment",
    "run_rmse_experiment",
    "run_coverage_experiment",
]


@dataclass(frozen=True)
class SimpleDgpConfig:
    """Uniform covariates, Gaussian noise, linear outcomes plus a small
    off-diagonal interaction in the treated arm.

    Defaults: beta0 = (1, 0, ..., 0), beta1 = 2 beta0, interaction scale
    1/20, unit error standard deviation.  The analytic population effect
    implied by these equations is ``sum(beta1) / 2`` (the interaction term
    has mean zero under centered uniform covariates).
    """

    n: int
    p: int
    beta0: tuple[float, ...] | None = None
    beta1: tuple[float, ...] | None = None
    interaction_scale: float = 1.0 / 20.0
    error_sd: float = 1.0
    seed: int = 42

    def resolved_betas(self) -> tuple[np.ndarray, np.ndarray]:
        if self.beta0 is None:
            b0 = np.zeros(self.p)
            if self.p:
                b0[0] = 1.0
        else:
            b0 = np.asarray(self.beta0, dtype=float)
        b1 = 2.0 * b0 if self.beta1 is None else np.asarray(self.beta1, dtype=float)
        if b0.size != self.p or b1.size != self.p:
            raise DimensionMismatch("beta vectors must have length p")
        return b0, b1

    @property
    def pate(self) -> float:
        _, b1 = self.resolved_betas()
        return float(b1.sum() / 2.0)


@dataclass(frozen=True)
class DgpSample:
    x: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    pate: float


def simple_dgp(config: SimpleDgpConfig, rng: np.random.Generator) -> DgpSample:
    """Draw one sample of covariates and both potential outcomes."""
    n, p = config.n, config.p
    b0, b1 = config.resolved_betas()
    x = rng.random((n, p))
    e0 = rng.normal(0.0, config.error_sd, n)
    e1 = rng.normal(0.0, config.error_sd, n)
    xc = x - 0.5
    y0 = 1.0 + xc @ b0 + e0
    if p > 0 and config.interaction_scale != 0.0:
        a = config.interaction_scale * (np.ones((p, p)) - np.eye(p))
        quad = np.einsum("ij,jk,ik->i", xc, a, xc)
    else:
        quad = 0.0
    y1 = 1.0 + x @ b1 + quad + e1
    return DgpSample(x=x, y0=y0, y1=y1, pate=config.pate)


@dataclass(frozen=True)
class ExperimentResult:
    """One summary cell of a Monte Carlo experiment.

    Every mean comes with its Monte Carlo standard error; fields that do
    not apply to the experiment type are NaN.
    """

    design_name: str
    p_used: int
    replications: int
    mean_imbalance: float = float("nan")
    imbalance_se: float = float("nan")
    rmse: float = float("nan")
    rmse_se: float = float("nan")
    bias: float = float("nan")
    bias_se: float = float("nan")
    sd: float = float("nan")
    coverage: float = float("nan")
    coverage_se: float = float("nan")
    power: float = float("nan")
    power_se: float = float("nan")
    wall_time: float = 0.0


DESIGN_NAMES = ("ct", "cr", "s2", "s4", "mp", "cube")


def make_design(name: str, ell: int = 2,
                policy: LandingPolicy | None = None,
                spec: BalanceSpec | None = None) -> Callable:
    """Design factory returning ``fn(x, rng) -> Assignment`` at pi = 1/2.

    Names: ``ct``, ``cr``, ``s<ell>`` (quantile-stratified), ``mp``,
    ``cube``.
    """
    if name.startswith("s") and name[1:].isdigit():
        ell = int(name[1:])
        name = "s"
    if name == "ct":
        return lambda x, rng: coin_toss(np.full(x.shape[0], 0.5), rng)
    if name == "cr":
        return lambda x, rng: complete_randomization(x.shape[0], x.shape[0] // 2, rng)
    if name == "s":
        return lambda x, rng: stratified_assign(stratify_by_quantiles(x, ell), rng)
    if name == "mp":
        return lambda x, rng: matched_pairs(x, rng)
    if name == "cube":
        pol = policy if policy is not None else LandingPolicy()
        spc = spec if spec is not None else BalanceSpec()

        def _cube(x, rng):
            half = np.full(x.shape[0], 0.5)
            return CubeSampler(x, half, spc, pol).draw(rng)

        return _cube
    raise ValueError(f"unknown design {name!r}")


def _thread_count(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("CUBERAND_THREADS", "").strip()
    return max(1, int(env)) if env.isdigit() else 1


def _run_replications(fn, replications: int, threads: int | None):
    """Evaluate fn(rep) for each index, merging results by index."""
    workers = _thread_count(threads)
    if workers == 1:
        return [fn(r) for r in range(replications)]
    out = [None] * replications
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for r, value in zip(range(replications), pool.map(fn, range(replications))):
            out[r] = value
    return out


def run_imbalance_experiment(
    n: int,
    p_grid: Sequence[int],
    designs: Sequence[str],
    replications: int,
    master_seed: int,
    ell: int = 2,
    threads: int | None = None,
) -> tuple[list[ExperimentResult], list[dict]]:
    """Mean squared imbalance norm per (design, p) cell at pi = 1/2.

    Each replication draws one uniform covariate sample shared by every
    design in the cell.  Returns summary cells and raw per-replication
    rows.
    """
    results: list[ExperimentResult] = []
    raw: list[dict] = []
    fns = {name: make_design(name, ell=ell) for name in designs}
    for p in p_grid:
        def one_rep(rep: int, p=p) -> tuple[dict, np.ndarray]:
            x = stream(master_seed, "imb-x", p, rep).random((n, p))
            values = {}
            for name, fn in fns.items():
                a = fn(x, stream(master_seed, "imb-d", name, p, rep))
                values[name] = compute_imbalance_norm(x, a.d)
            return values, x

        t0 = time.perf_counter()
        reps = _run_replications(lambda r: one_rep(r), replications, threads)
        elapsed = time.perf_counter() - t0
        for name in designs:
            vals = np.array([values[name] for values, _ in reps])
            results.append(
                ExperimentResult(
                    design_name=name,
                    p_used=p,
                    replications=replications,
                    mean_imbalance=float(vals.mean()),
                    imbalance_se=float(vals.std(ddof=1) / np.sqrt(replications)),
                    wall_time=elapsed,
                )
            )
            raw.extend(
                {"design": name, "p": p, "replication": r, "b_norm_sq": float(v)}
                for r, v in enumerate(vals)
            )
    return results, raw


def run_rmse_experiment(
    config: SimpleDgpConfig,
    designs: Sequence[str],
    p_grid: Sequence[int],
    replications: int,
    master_seed: int,
    ell: int = 2,
    threads: int | None = None,
) -> tuple[list[ExperimentResult], list[dict]]:
    """RMSE / bias / sd of the weighted estimator per (design, p) cell.

    The data-generating process is fixed at ``config.p`` covariates and
    drawn once per replication; the (design, p) cell hands the design only
    the first ``p`` covariates to balance, so cells differ purely in how
    much baseline information the randomization uses.  Every ``p`` in the
    grid must be at most ``config.p``.
    """
    if max(p_grid) > config.p:
        raise DimensionMismatch(
            f"grid includes p={max(p_grid)} but the data has only {config.p} covariates"
        )
    results: list[ExperimentResult] = []
    raw: list[dict] = []
    fns = {name: make_design(name, ell=ell) for name in designs}
    pate = config.pate
    half = np.full(config.n, 0.5)

    def one_rep(rep: int) -> dict:
        sample = simple_dgp(config, stream(master_seed, "rmse-dgp", rep))
        est = {}
        for p in p_grid:
            xp = sample.x[:, :p]
            for name, fn in fns.items():
                a = fn(xp, stream(master_seed, "rmse-d", name, p, rep))
                y = np.where(a.d == 1, sample.y1, sample.y0)
                est[(name, p)] = horvitz_thompson(y, a.d, half)
        return est

    t0 = time.perf_counter()
    reps = _run_replications(one_rep, replications, threads)
    elapsed = time.perf_counter() - t0
    for p in p_grid:
        for name in designs:
            th = np.array([est[(name, p)] for est in reps])
            sq = (th - pate) ** 2
            mse = float(sq.mean())
            rmse = float(np.sqrt(mse))
            mse_se = float(sq.std(ddof=1) / np.sqrt(replications))
            results.append(
                ExperimentResult(
                    design_name=name,
                    p_used=p,
                    replications=replications,
                    rmse=rmse,
                    rmse_se=mse_se / (2.0 * rmse) if rmse > 0 else 0.0,
                    bias=float(th.mean() - pate),
                    bias_se=float(th.std(ddof=1) / np.sqrt(replications)),
                    sd=float(th.std(ddof=1)),
                    wall_time=elapsed,
                )
            )
            raw.extend(
                {"design": name, "p": p, "replication": r, "theta_hat": float(v)}
                for r, v in enumerate(th)
            )
    return results, raw


def run_coverage_experiment(
    config: SimpleDgpConfig,
    replications: int,
    alpha: float,
    master_seed: int,
    design: str = "cube",
    threads: int | None = None,
) -> tuple[ExperimentResult, list[dict]]:
    """Interval coverage of the true effect and power against a zero effect."""
    fn = make_design(design)
    pate = config.pate

    def one_rep(rep: int) -> tuple[float, float, float, bool, bool]:
        sample = simple_dgp(config, stream(master_seed, "cov-dgp", rep))
        a = fn(sample.x, stream(master_seed, "cov-d", design, rep))
        half = np.full(config.n, 0.5)
        y = np.where(a.d == 1, sample.y1, sample.y0)
        theta = horvitz_thompson(y, a.d, half)
        z1, z0 = build_regressors(sample.x, half)
        var = pate_variance(y, a.d, half, z1, z0)
        low, high = confidence_interval(theta, var, alpha)
        return theta, low, high, (low <= pate <= high), not (low <= 0.0 <= high)

    t0 = time.perf_counter()
    reps = _run_replications(one_rep, replications, threads)
    elapsed = time.perf_counter() - t0
    covered = np.array([c for *_, c, _ in reps], dtype=float)
    rejected = np.array([rj for *_, rj in reps], dtype=float)
    th = np.array([t for t, *_ in reps])
    sq = (th - pate) ** 2
    rmse = float(np.sqrt(sq.mean()))
    result = ExperimentResult(
        design_name=design,
        p_used=config.p,
        replications=replications,
        rmse=rmse,
        rmse_se=float(sq.std(ddof=1) / np.sqrt(replications)) / (2.0 * rmse) if rmse > 0 else 0.0,
        bias=float(th.mean() - pate),
        bias_se=float(th.std(ddof=1) / np.sqrt(replications)),
        sd=float(th.std(ddof=1)),
        coverage=float(covered.mean()),
        coverage_se=float(covered.std(ddof=1) / np.sqrt(replications)),
        power=float(rejected.mean()),
        power_se=float(rejected.std(ddof=1) / np.sqrt(replications)),
        wall_time=elapsed,
    )
    raw = [
        {
            "design": design,
            "p": config.p,
            "replication": r,
            "theta_hat": float(t),
            "ci_low": float(lo),
            "ci_high": float(hi),
            "covered": int(c),
            "rejected": int(rj),
        }
        for r, (t, lo, hi, c, rj) in enumerate(reps)
    ]
    return result, raw
