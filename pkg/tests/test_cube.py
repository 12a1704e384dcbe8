"""Tests for constraint building, the flight phase, and both landings."""

import numpy as np
import pytest

from cuberand.balance import compute_delta
from cuberand.cube import (
    BalanceSpec,
    ConstraintMatrix,
    CubeSampler,
    FlightState,
    LandingPolicy,
    build_constraints,
    cube_assign,
    flight_phase,
    landing_lp,
    landing_lp_distribution,
    landing_suppression,
)
from cuberand.errors import PropensityOutOfRange, TooManyUnresolved
from cuberand.rng import stream


def fixed_size_constraints(n, pi):
    """Fixed-size-only constraint set (the constant row at homogeneous pi)."""
    return build_constraints(np.zeros((n, 0)), np.full(n, pi), BalanceSpec(moments=[]))


class TestBuildConstraints:
    def test_homogeneous_half_collapses_to_constant_and_covariate(self):
        x = np.array([0.2, 0.4, 0.6, 0.8])
        cm = build_constraints(x, np.full(4, 0.5), BalanceSpec())
        assert cm.q == 2
        assert cm.row_labels == ("const", "x1")
        assert cm.a[0] == pytest.approx(np.full(4, 2.0))
        assert cm.a[1] == pytest.approx(2.0 * x)

    def test_heterogeneous_no_covariates_three_rows(self):
        pi = np.array([0.2, 0.5, 0.7, 0.4])
        cm = build_constraints(np.zeros((4, 0)), pi, BalanceSpec(moments=[]))
        assert cm.q == 3
        assert cm.row_labels == ("const", "pi_ratio", "pi")
        assert cm.dropped_rows == ()

    def test_second_moments_on_one_covariate(self):
        pi = stream(21, "pi").uniform(0.2, 0.8, 9)
        x = stream(21, "bc").random((9, 2))
        cm = build_constraints(x, pi, BalanceSpec(moments=["first_and_second", "first"]))
        assert cm.q == 3 + 3
        assert cm.row_labels == ("const", "pi_ratio", "pi", "x1", "x1^2", "x2")

    def test_columns_scaled_by_inverse_pi(self):
        pi = np.array([0.2, 0.5, 0.7])
        x = np.array([1.0, 2.0, 3.0])
        cm = build_constraints(x, pi, BalanceSpec())
        assert cm.a == pytest.approx(cm.z / pi[None, :])

    def test_out_of_range_pi_rejected(self):
        with pytest.raises(PropensityOutOfRange):
            build_constraints(np.zeros((3, 0)), [0.5, 0.999, 0.5], BalanceSpec(moments=[]))
        with pytest.raises(PropensityOutOfRange):
            build_constraints(np.zeros((2, 0)), [0.001, 0.5], BalanceSpec(moments=[]))

    def test_duplicate_covariate_dropped(self):
        x = np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]])
        cm = build_constraints(x, np.full(3, 0.5), BalanceSpec())
        assert cm.q == 2
        assert cm.dropped_rows == ("x2",)

    def test_empty_spec_rejected(self):
        with pytest.raises(ValueError):
            build_constraints(
                np.zeros((3, 0)),
                np.full(3, 0.5),
                BalanceSpec(include_fixed_size=False, include_group_constants=False, moments=[]),
            )


class TestFlightPhase:
    def test_fixed_size_two_of_three(self):
        cm = fixed_size_constraints(3, 2.0 / 3.0)
        for k in range(100):
            st = flight_phase(cm.a, cm.pi, stream(22, k))
            assert st.unresolved == 0
            assert int(st.pi_t.sum()) == 2

    def test_odd_sample_leaves_one_unit(self):
        cm = fixed_size_constraints(101, 0.5)
        for k in range(10):
            st = flight_phase(cm.a, cm.pi, stream(23, k))
            assert st.unresolved == 1
            assert st.pi_t[st.frozen].sum() == pytest.approx(50.0)
            assert st.pi_t[~st.frozen][0] == pytest.approx(0.5)

    def test_no_constraints_bernoulli_marginals(self):
        a = np.zeros((0, 4))
        pi = np.array([0.1, 0.3, 0.5, 0.9])
        reps = 40_000
        total = np.zeros(4)
        for k in range(reps):
            st = flight_phase(a, pi, stream(24, k))
            assert st.unresolved == 0
            total += st.pi_t
        se = np.sqrt(pi * (1 - pi) / reps)
        assert np.all(np.abs(total / reps - pi) <= 4 * se)

    def test_exit_state_is_martingale(self):
        # single-constraint instance: E[pi at exit] must equal pi(0)
        z = np.array([[2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0]])
        a = z / (2.0 / 3.0)
        pi0 = np.full(3, 2.0 / 3.0)
        reps = 100_000
        total = np.zeros(3)
        for k in range(reps):
            total += flight_phase(a, pi0, stream(25, k)).pi_t
        se = np.sqrt(0.25 / reps)
        assert np.all(np.abs(total / reps - pi0) <= 4 * se)

    def test_constraint_conservation_random_instances(self):
        g = np.random.default_rng(20240903)
        for _ in range(200):
            n = int(g.integers(5, 40))
            q = int(g.integers(0, 5))
            a = np.ascontiguousarray(g.normal(size=(q, n)))
            pi0 = g.uniform(0.05, 0.95, n)
            st = flight_phase(a, pi0, stream(26, _))
            assert st.unresolved <= q
            if q:
                drift = np.max(np.abs(a @ st.pi_t - a @ pi0))
                assert drift <= 1e-7 * (1.0 + np.max(np.abs(a @ pi0)))
            frozen_vals = st.pi_t[st.frozen]
            assert np.all((frozen_vals == 0.0) | (frozen_vals == 1.0))
            live = st.pi_t[~st.frozen]
            assert np.all((live > 1e-9) & (live < 1 - 1e-9))


class TestLandingLp:
    def test_zero_unresolved_passthrough(self):
        cm = fixed_size_constraints(4, 0.5)
        st = FlightState(
            pi_t=np.array([1.0, 0.0, 1.0, 0.0]),
            frozen=np.ones(4, dtype=bool),
            steps_taken=4,
        )
        a = landing_lp(st, cm, None, stream(27, 0))
        assert list(a.d) == [1, 0, 1, 0]
        assert a.landing_units == 0

    def test_single_unresolved_unit_distribution_and_marginal(self):
        # one unit left at pi* = 2/3: optimal mix is (1/3, 2/3) exactly
        z = np.array([[2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0]])
        cm = ConstraintMatrix(
            a=z / (2.0 / 3.0), z=z, pi=np.full(3, 2.0 / 3.0), row_labels=("z",)
        )
        st = FlightState(
            pi_t=np.array([1.0, 2.0 / 3.0, 1.0]),
            frozen=np.array([True, False, True]),
            steps_taken=2,
        )
        bits, prob = landing_lp_distribution(st, cm)
        assert bits.ravel() == pytest.approx([0.0, 1.0])
        assert prob == pytest.approx([1.0 / 3.0, 2.0 / 3.0], abs=1e-9)
        reps = 30_000
        treated = sum(int(landing_lp(st, cm, None, stream(28, k)).d[1]) for k in range(reps))
        assert abs(treated / reps - 2.0 / 3.0) <= 4 * np.sqrt((2.0 / 9.0) / reps)

    def test_antithetic_completions_get_all_mass(self):
        # two unresolved units with identical constraint columns: the
        # antithetic completions have zero cost, everything else positive
        z = np.array([[1.0, 1.0], [0.5, 0.5]])
        cm = ConstraintMatrix(
            a=z / 0.5, z=z, pi=np.full(2, 0.5), row_labels=("r1", "r2")
        )
        st = FlightState(
            pi_t=np.array([0.5, 0.5]),
            frozen=np.array([False, False]),
            steps_taken=0,
        )
        bits, prob = landing_lp_distribution(st, cm)
        # completions ordered 00, 10, 01, 11
        assert prob[0] == pytest.approx(0.0, abs=1e-9)
        assert prob[3] == pytest.approx(0.0, abs=1e-9)
        assert prob[1] + prob[2] == pytest.approx(1.0, abs=1e-9)
        # grid-search oracle over the one-parameter feasible family
        m = np.eye(2)
        costs = np.array(
            [float(v @ m @ v) for v in ((bits - 0.5) @ z.T)]
        )
        grid = np.arange(0.0, 0.5 + 1e-9, 1e-3)
        oracle = min(
            t * costs[0] + (0.5 - t) * (costs[1] + costs[2]) + t * costs[3]
            for t in grid
        )
        assert float(prob @ costs) <= oracle + 1e-8

    def test_cost_matrix_validated(self):
        from cuberand.errors import DomainError

        z = np.array([[2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0]])
        cm = ConstraintMatrix(
            a=z / (2.0 / 3.0), z=z, pi=np.full(3, 2.0 / 3.0), row_labels=("z",)
        )
        st = FlightState(
            pi_t=np.array([1.0, 2.0 / 3.0, 1.0]),
            frozen=np.array([True, False, True]),
            steps_taken=2,
        )
        with pytest.raises(DomainError):
            landing_lp_distribution(st, cm, cost_matrix=np.array([[-1.0]]))
        bits, prob = landing_lp_distribution(st, cm, cost_matrix=np.array([[2.5]]))
        assert prob == pytest.approx([1.0 / 3.0, 2.0 / 3.0], abs=1e-9)

    def test_inverse_covariance_cost(self):
        from cuberand.cube import inverse_covariance_cost

        z = stream(51, "z").random((3, 40))
        m = inverse_covariance_cost(z)
        gram = z @ z.T / 40
        assert m @ gram == pytest.approx(np.eye(3), abs=1e-9)
        # rank-deficient rows force the ridge path but still yield a
        # usable symmetric matrix
        z_dup = np.vstack([z[0], z[0]])
        m2 = inverse_covariance_cost(z_dup)
        assert m2 == pytest.approx(m2.T)

    def test_too_many_unresolved(self):
        n = 20
        z = np.ones((1, n))
        cm = ConstraintMatrix(a=2 * z, z=z, pi=np.full(n, 0.5), row_labels=("c",))
        st = FlightState(
            pi_t=np.full(n, 0.5), frozen=np.zeros(n, dtype=bool), steps_taken=0
        )
        with pytest.raises(TooManyUnresolved):
            landing_lp(st, cm, None, stream(29, 0), lp_max_unresolved=15)


class TestLandingSuppression:
    def test_dropping_lets_flight_freeze_more(self):
        # heterogeneous pi, fixed size; flight stops with r <= q, then
        # suppression must finish every unit
        pi = np.array([0.3, 0.5, 0.7, 0.4, 0.6, 0.45])
        cm = build_constraints(stream(30, "x").random((6, 1)), pi, BalanceSpec())
        st = flight_phase(cm.a, cm.pi, stream(30, "f"))
        assert 0 < st.unresolved <= cm.q
        a = landing_suppression(st, cm, None, stream(30, "l"))
        assert a.landing_units == st.unresolved
        assert set(np.unique(a.d)).issubset({0, 1})

    def test_drop_order_direction_keeps_flight_prefix(self):
        pi = np.array([0.3, 0.5, 0.7, 0.4, 0.6, 0.45])
        x = stream(31, "x").random((6, 2))
        cm = build_constraints(x, pi, BalanceSpec())
        st = flight_phase(cm.a, cm.pi, stream(31, "f"))
        fwd = landing_suppression(st, cm, list(range(cm.q)), stream(31, "l"))
        rev = landing_suppression(st, cm, list(range(cm.q - 1, -1, -1)), stream(31, "l"))
        frozen = st.frozen
        assert np.array_equal(fwd.d[frozen], rev.d[frozen])
        assert np.array_equal(fwd.d[frozen], st.pi_t[frozen].astype(np.int8))

    def test_many_constraints_marginals_preserved(self):
        n, p = 40, 25
        x = stream(32, "x").random((n, p))
        pi = np.full(n, 0.5)
        sampler = CubeSampler(x, pi)
        assert sampler.constraints.q == p + 1
        reps = 20_000
        total = np.zeros(n)
        landing_counts = []
        for k in range(reps):
            a = sampler.draw(stream(33, k))
            landing_counts.append(a.landing_units)
            total += a.d
        # q = 26 exceeds the LP limit, so every draw lands by suppression
        assert max(landing_counts) > 15
        se = np.sqrt(0.25 / reps)
        assert np.all(np.abs(total / reps - 0.5) <= 4 * se)


class TestCubeAssign:
    def test_fixed_size_exact_every_draw(self):
        # with the pure fixed-size constraint set, even n and pi = 1/2 make
        # every walk finish on a vertex, so group sizes are exact by
        # construction; covariate constraints keep it in practice too
        x = stream(34, "x").random((20, 2))
        pi = np.full(20, 0.5)
        for k in range(200):
            a = cube_assign(x, pi, BalanceSpec(moments=[]), LandingPolicy(), stream(34, k))
            assert a.n_treated == 10
            assert a.landing_units == 0
        with_covs = sum(
            cube_assign(x, pi, BalanceSpec(), LandingPolicy(), stream(34, "c", k)).n_treated == 10
            for k in range(200)
        )
        assert with_covs >= 190

    def test_two_units_half_half(self):
        x = np.zeros((2, 0))
        pi = np.full(2, 0.5)
        reps = 20_000
        first = 0
        for k in range(reps):
            a = cube_assign(x, pi, BalanceSpec(moments=[]), LandingPolicy(), stream(35, k))
            assert a.n_treated == 1
            first += int(a.d[0])
        assert abs(first / reps - 0.5) <= 4 * np.sqrt(0.25 / reps)

    def test_wide_balance_bound_single_draws(self):
        n, p = 500, 30
        x = stream(36, "x").random((n, p))
        pi = np.full(n, 0.5)
        sampler = CubeSampler(x, pi)
        bound = 1.0 * (p + 1) / (0.5 * n)
        for k in range(5):
            a = sampler.draw(stream(36, k))
            delta = compute_delta(x, a.d, pi)
            assert np.max(np.abs(delta)) < bound
            # observed imbalances sit far below the worst-case bound
            assert np.max(np.abs(delta)) < bound / 5

    def test_landing_provenance_recorded(self):
        # odd n with fixed size forces exactly one landing unit
        x = np.zeros((5, 0))
        a = cube_assign(x, np.full(5, 0.5), BalanceSpec(moments=[]), LandingPolicy(), stream(40, 0))
        assert a.landing_units == 1
        assert a.landing_mode == "lp"
        b = cube_assign(
            x, np.full(5, 0.5), BalanceSpec(moments=[]),
            LandingPolicy(mode="suppress"), stream(40, 1),
        )
        assert b.landing_mode == "suppress"
        even = cube_assign(
            np.zeros((4, 0)), np.full(4, 0.5), BalanceSpec(moments=[]),
            LandingPolicy(), stream(40, 2),
        )
        assert even.landing_units == 0
        assert even.landing_mode is None

    def test_heterogeneous_pi_marginals(self):
        n = 12
        pi = stream(37, "pi").uniform(0.2, 0.8, n)
        x = stream(37, "x").random((n, 2))
        sampler = CubeSampler(x, pi)
        reps = 30_000
        total = np.zeros(n)
        for k in range(reps):
            total += sampler.draw(stream(38, k)).d
        se = np.sqrt(pi * (1 - pi) / reps)
        assert np.all(np.abs(total / reps - pi) <= 4 * se)

    def test_mean_imbalance_bound_small_grid(self):
        # expectation bound 4 (p+1)^2 / n^2 for the enumeration landing
        n, reps = 100, 400
        for p in (1, 5, 10):
            vals = np.empty(reps)
            for r in range(reps):
                x = stream(39, "x", p, r).random((n, p))
                a = cube_assign(x, np.full(n, 0.5), BalanceSpec(), LandingPolicy(), stream(39, "d", p, r))
                from cuberand.balance import compute_imbalance_norm

                vals[r] = compute_imbalance_norm(x, a.d)
            bound = 4.0 * (p + 1) ** 2 / n ** 2
            se = vals.std(ddof=1) / np.sqrt(reps)
            assert vals.mean() <= bound + 3 * se
