"""Command line surface.

Subcommands: ``assign``, ``balance``, ``estimate``, ``infer``,
``simulate``.  Options may come from a flat INI-style config file (one
section per subcommand, ``key = value``); command-line flags win over the
file.  All randomness flows from one explicit master seed (default 42,
never the clock), so every invocation is reproducible byte for byte.

Exit codes: 0 success, 2 malformed input CSV, 3 design/domain error,
4 numerical breakdown.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys

import numpy as np

from .balance import balance_report
from .cube import (
    BalanceSpec,
    CubeSampler,
    LandingPolicy,
    build_constraints,
    inverse_covariance_cost,
)
from .designs import (
    coin_toss,
    complete_randomization,
    matched_pairs,
    stratified_assign,
    stratify_by_quantiles,
)
from .errors import (
    CuberandError,
    DimensionMismatch,
    DomainError,
    EmptyGroup,
    HeterogeneousPi,
    Infeasible,
    InsufficientData,
    InvalidGroupSize,
    InvalidProbability,
    NoIdentifiedStrata,
    NoKernel,
    NumericalBreakdown,
    OddSampleSize,
    PropensityOutOfRange,
    TooManyUnresolved,
    Unbounded,
)
from .estimators import (
    build_regressors,
    confidence_interval,
    hajek,
    horvitz_thompson,
    pate_variance,
    strata_fixed_effects,
)
from .inference import randomization_test
from .rng import stream
from .simulation import (
    SimpleDgpConfig,
    run_coverage_experiment,
    run_imbalance_experiment,
    run_rmse_experiment,
)

EXIT_OK = 0
EXIT_BAD_CSV = 2
EXIT_DESIGN = 3
EXIT_NUMERIC = 4

_DESIGN_ERRORS = (
    PropensityOutOfRange,
    InvalidProbability,
    InvalidGroupSize,
    OddSampleSize,
    DomainError,
    EmptyGroup,
    NoIdentifiedStrata,
    InsufficientData,
    HeterogeneousPi,
    DimensionMismatch,
    ValueError,
)
_NUMERIC_ERRORS = (NumericalBreakdown, Infeasible, Unbounded, TooManyUnresolved, NoKernel)


class MalformedCsv(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise MalformedCsv(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise MalformedCsv(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise MalformedCsv(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
    return header, body


def _column(header, body, name, path, kind=float, required=True):
    if name not in header:
        if required:
            raise MalformedCsv(f"{path}: missing required column {name!r}")
        return None
    j = header.index(name)
    out = []
    for i, row in enumerate(body):
        try:
            out.append(kind(row[j]))
        except ValueError as exc:
            raise MalformedCsv(
                f"{path}: row {i + 2} column {name!r}: bad value {row[j]!r}"
            ) from exc
    return out


def _covariates(header, body, path) -> np.ndarray:
    names = []
    j = 1
    while f"x{j}" in header:
        names.append(f"x{j}")
        j += 1
    cols = [_column(header, body, nm, path) for nm in names]
    if not cols:
        return np.zeros((len(body), 0))
    return np.column_stack(cols)


def _load_units(path: str, need: tuple[str, ...] = ()):
    header, body = _read_table(path)
    unit_ids = _column(header, body, "unit_id", path, kind=str)
    n = len(unit_ids)
    if n == 0:
        raise MalformedCsv(f"{path}: no data rows")
    pi = _column(header, body, "pi", path, required=False)
    pi = np.full(n, 0.5) if pi is None else np.asarray(pi)
    x = _covariates(header, body, path)
    data = {"unit_id": unit_ids, "pi": pi, "x": x}
    for name in need:
        data[name] = np.asarray(_column(header, body, name, path))
    return data


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _balance_spec(args) -> BalanceSpec:
    return BalanceSpec(moments=args.moments)


def _landing_policy(args, x, pi) -> LandingPolicy:
    cost = None
    if args.m == "invcov":
        cm = build_constraints(x, pi, _balance_spec(args))
        cost = inverse_covariance_cost(cm.z)
    return LandingPolicy(mode=args.landing, cost_matrix=cost)


def _draw_assignment(args, data):
    x, pi = data["x"], data["pi"]
    n = x.shape[0]
    rng = stream(args.seed, "design", args.design)
    if args.design == "ct":
        return coin_toss(pi, rng), []
    if args.design == "cr":
        return complete_randomization(n, n // 2, rng), []
    if args.design.startswith("s") and args.design[1:].isdigit():
        part = stratify_by_quantiles(x, int(args.design[1:]))
        return stratified_assign(part, rng), []
    if args.design == "mp":
        return matched_pairs(x, rng), []
    if args.design == "cube":
        sampler = CubeSampler(x, pi, _balance_spec(args), _landing_policy(args, x, pi))
        notes = []
        if sampler.constraints.dropped_rows:
            notes.append(
                "dropped collinear constraint rows: "
                + ",".join(sampler.constraints.dropped_rows)
            )
        a = sampler.draw(rng)
        if a.landing_units:
            notes.append(f"landing resolved {a.landing_units} units")
        return a, notes
    raise ValueError(f"unknown design {args.design!r}")


def cmd_assign(args) -> int:
    data = _load_units(args.input)
    assignment, notes = _draw_assignment(args, data)
    for note in notes:
        print(f"assign: {note}", file=sys.stderr)
    rows = [
        [uid, int(d), float(p), args.design, args.seed]
        for uid, d, p in zip(data["unit_id"], assignment.d, data["pi"])
    ]
    _write_csv(args.output, ["unit_id", "d", "pi", "design", "seed"], rows)
    return EXIT_OK


def cmd_balance(args) -> int:
    data = _load_units(args.input, need=("d",))
    report = balance_report(data["x"], data["d"], data["pi"])
    rows = [
        [f"x{j + 1}", report.delta[j], report.t_stats[j], report.p_values[j], report.b_norm_sq]
        for j in range(report.delta.size)
    ]
    _write_csv(args.output, ["covariate", "delta", "t_stat", "p_value", "b_norm_sq"], rows)
    return EXIT_OK


def cmd_estimate(args) -> int:
    data = _load_units(args.input, need=("y", "d"))
    y, d, pi, x = data["y"], data["d"], data["pi"], data["x"]
    rows = []
    kinds = ["horvitz_thompson", "hajek"] if args.estimator == "all" else [args.estimator]
    for kind in kinds:
        if kind in ("horvitz_thompson", "hajek"):
            theta = horvitz_thompson(y, d, pi) if kind == "horvitz_thompson" else hajek(y, d, pi)
            z1, z0 = build_regressors(x, pi)
            var = pate_variance(y, d, pi, z1, z0)
            low, high = confidence_interval(theta, var, args.alpha)
            rows.append([kind, theta, var, low, high, args.alpha, 0])
        elif kind == "strata_fe":
            part = stratify_by_quantiles(x, args.ell)
            fit = strata_fixed_effects(y, d, part)
            rows.append([kind, fit.theta_hat, float("nan"), float("nan"), float("nan"),
                         args.alpha, fit.dropped_strata])
        else:
            raise ValueError(f"unknown estimator {kind!r}")
    _write_csv(
        args.output,
        ["kind", "theta_hat", "variance_hat", "ci_low", "ci_high", "alpha", "dropped_strata"],
        rows,
    )
    return EXIT_OK


def cmd_infer(args) -> int:
    data = _load_units(args.input, need=("y", "d"))
    result = randomization_test(
        data["y"],
        data["d"],
        data["x"],
        data["pi"],
        spec=_balance_spec(args),
        policy=_landing_policy(args, data["x"], data["pi"]),
        b=args.b,
        statistic=args.statistic,
        rng=stream(args.seed, "infer"),
    )
    _write_csv(
        args.output,
        ["statistic", "b", "statistic_observed", "p_value"],
        [[args.statistic, result.b, result.statistic_observed, result.p_value]],
    )
    return EXIT_OK


_SUMMARY_HEADER = [
    "experiment", "design", "p", "replications",
    "mean_imbalance", "imbalance_se", "rmse", "rmse_se", "bias", "bias_se",
    "sd", "coverage", "coverage_se", "power", "power_se",
]


def _summary_row(experiment: str, r) -> list:
    return [
        experiment, r.design_name, r.p_used, r.replications,
        r.mean_imbalance, r.imbalance_se, r.rmse, r.rmse_se, r.bias, r.bias_se,
        r.sd, r.coverage, r.coverage_se, r.power, r.power_se,
    ]


def cmd_simulate(args) -> int:
    p_grid = [int(v) for v in args.p_grid.split(",") if v]
    designs = [v.strip() for v in args.designs.split(",") if v.strip()]
    print(
        f"simulate: experiment={args.experiment} n={args.n} p_grid={p_grid} "
        f"designs={designs} replications={args.replications}",
        file=sys.stderr,
    )
    if args.experiment == "imbalance":
        cells, raw = run_imbalance_experiment(
            args.n, p_grid, designs, args.replications, args.seed, ell=args.ell
        )
    elif args.experiment == "rmse":
        config = SimpleDgpConfig(n=args.n, p=max(p_grid), error_sd=args.error_sd, seed=args.seed)
        cells, raw = run_rmse_experiment(
            config, designs, p_grid, args.replications, args.seed, ell=args.ell
        )
    elif args.experiment == "coverage":
        cells = []
        raw = []
        for p in p_grid:
            config = SimpleDgpConfig(n=args.n, p=p, error_sd=args.error_sd, seed=args.seed)
            cell, cell_raw = run_coverage_experiment(
                config, args.replications, args.alpha, args.seed
            )
            cells.append(cell)
            raw.extend(cell_raw)
    else:
        raise ValueError(f"unknown experiment {args.experiment!r}")
    for cell in cells:
        print(
            f"simulate: cell design={cell.design_name} p={cell.p_used} "
            f"done in {cell.wall_time:.2f}s",
            file=sys.stderr,
        )
    _write_csv(args.output, _SUMMARY_HEADER, [_summary_row(args.experiment, c) for c in cells])
    if args.raw_output:
        header = list(raw[0].keys()) if raw else ["design", "p", "replication"]
        _write_csv(args.raw_output, header, [[row[k] for k in header] for row in raw])
    return EXIT_OK


def _add_common(sub, *, io=True):
    sub.add_argument("--config", help="INI config file; flags win over file values")
    sub.add_argument("--seed", type=int, help="master seed (default 42)")
    if io:
        sub.add_argument("--input", help="input CSV path")
        sub.add_argument("--output", help="output CSV path")


def _add_cube_opts(sub):
    sub.add_argument("--moments", choices=["first", "first_and_second"],
                     help="balanced moments per covariate (default first)")
    sub.add_argument("--landing", choices=["lp", "suppress"],
                     help="landing mode (default lp)")
    sub.add_argument("--m", choices=["identity", "invcov"],
                     help="landing cost matrix (default identity)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cuberand",
        description="Covariate-balanced treatment assignment and analysis",
    )
    subs = parser.add_subparsers(dest="subcommand", required=True)

    s = subs.add_parser("assign", help="draw a treatment assignment for a covariate CSV")
    _add_common(s)
    s.add_argument("--design", help="ct | cr | s<ell> | mp | cube (default cube)")
    _add_cube_opts(s)

    s = subs.add_parser("balance", help="balance diagnostics for an assigned sample")
    _add_common(s)

    s = subs.add_parser("estimate", help="treatment-effect estimates with intervals")
    _add_common(s)
    s.add_argument("--estimator", choices=["horvitz_thompson", "hajek", "strata_fe", "all"])
    s.add_argument("--alpha", type=float, help="interval level (default 0.05)")
    s.add_argument("--ell", type=int, help="quantile cells per covariate (default 2)")

    s = subs.add_parser("infer", help="randomization test under the strong null")
    _add_common(s)
    _add_cube_opts(s)
    s.add_argument("--b", type=int, help="total draws incl. observed (default 200)")
    s.add_argument("--statistic", choices=["abs_ht", "abs_hajek"])

    s = subs.add_parser("simulate", help="Monte Carlo experiments over designs")
    _add_common(s, io=False)
    s.add_argument("--output", help="summary CSV path")
    s.add_argument("--raw-output", dest="raw_output", help="optional raw CSV path")
    s.add_argument("--experiment", choices=["imbalance", "rmse", "coverage"])
    s.add_argument("--n", type=int, help="sample size (default 100)")
    s.add_argument("--p-grid", dest="p_grid", help="comma list of covariate counts")
    s.add_argument("--designs", help="comma list of designs (default ct,cr,cube)")
    s.add_argument("--replications", type=int, help="Monte Carlo replications (default 200)")
    s.add_argument("--alpha", type=float, help="interval level (default 0.05)")
    s.add_argument("--ell", type=int, help="quantile cells for stratified design (default 2)")
    s.add_argument("--error-sd", dest="error_sd", type=float, help="outcome noise sd (default 1)")
    return parser


_DEFAULTS = {
    "seed": 42,
    "design": "cube",
    "moments": "first",
    "landing": "lp",
    "m": "identity",
    "estimator": "all",
    "alpha": 0.05,
    "ell": 2,
    "b": 200,
    "statistic": "abs_ht",
    "experiment": "imbalance",
    "n": 100,
    "p_grid": "2",
    "designs": "ct,cr,cube",
    "replications": 200,
    "error_sd": 1.0,
    "input": None,
    "output": None,
    "raw_output": None,
}

_TYPED = {"seed": int, "alpha": float, "ell": int, "b": int, "n": int,
          "replications": int, "error_sd": float}


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    file_values = {}
    if args.config:
        cp = configparser.ConfigParser()
        read = cp.read(args.config)
        if not read:
            raise MalformedCsv(f"cannot read config file {args.config}")
        if cp.has_section(args.subcommand):
            for key, value in cp.items(args.subcommand):
                file_values[key.replace("-", "_")] = value
    for key, default in _DEFAULTS.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) is not None:
            continue
        if key in file_values:
            value = file_values[key]
            setattr(args, key, _TYPED[key](value) if key in _TYPED else value)
        else:
            setattr(args, key, default)
    return args


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(args)
        for required in ("input", "output"):
            if hasattr(args, required) and getattr(args, required) is None:
                if required == "input" and args.subcommand == "simulate":
                    continue
                parser.error(f"--{required} is required for {args.subcommand}")
        handler = {
            "assign": cmd_assign,
            "balance": cmd_balance,
            "estimate": cmd_estimate,
            "infer": cmd_infer,
            "simulate": cmd_simulate,
        }[args.subcommand]
        return handler(args)
    except MalformedCsv as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CSV
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DESIGN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DESIGN
    except CuberandError as exc:  # catch-all for anything not mapped above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
