"""cuberand: covariate-balanced treatment assignment with the cube method.

The package bundles the balanced-assignment walk itself, the baseline
randomization designs it is usually compared against, balance diagnostics,
treatment-effect estimators with asymptotic and randomization-based
inference, and a reproducible Monte Carlo harness.
"""

from ._kernels import NUMBA_ENABLED
from .balance import BalanceReport, balance_report, balance_tests, compute_delta, compute_imbalance_norm
from .cube import (
    BalanceSpec,
    ConstraintMatrix,
    CubeSampler,
    FlightState,
    LandingPolicy,
    build_constraints,
    cube_assign,
    flight_phase,
    inverse_covariance_cost,
    landing_lp,
    landing_suppression,
)
from .designs import (
    Assignment,
    StrataPartition,
    coin_toss,
    complete_randomization,
    matched_pairs,
    stratified_assign,
    stratify_by_quantiles,
)
from .estimators import (
    EstimateResult,
    build_regressors,
    confidence_interval,
    hajek,
    horvitz_thompson,
    pate_variance,
    strata_fe_estimate,
)
from .inference import RandomizationTestResult, randomization_test
from .numerics import (
    DEFAULT_TOLERANCES,
    LpProblem,
    Tolerances,
    normal_cdf,
    normal_quantile,
    null_space_vector,
    solve_lp,
    solve_ols,
)
from .rng import stream
from .simulation import (
    ExperimentResult,
    SimpleDgpConfig,
    make_design,
    run_coverage_experiment,
    run_imbalance_experiment,
    run_rmse_experiment,
    simple_dgp,
)

__version__ = "0.1.0"
