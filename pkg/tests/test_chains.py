"""Finite-chain verification: condition checks, return-time moments,
domination tails, the theorem-style decay report, the two
domination-distance inequalities, and the coupling construction."""

import json
import math

import numpy as np
import pytest

from monotone_ergo import fixture_path
from monotone_ergo.chains import (ChainError, Divergent, EmptyTarget,
                                  FiniteKernel, MarginalMismatch,
                                  OrderedSpaceSpec, PremiseViolated,
                                  absorbed_chain_second_eigenvalue,
                                  check_all_conditions, check_lyapunov,
                                  check_order_preserving,
                                  check_swap_condition,
                                  coupling_construct_simulate,
                                  domination_time_tail, lemma33_verify,
                                  lemma44_verify, moment_bound_M,
                                  return_time_exp_moments,
                                  theorem_main_verify, triple_order_exact)
from monotone_ergo.posets import (FinitePoset, antichain_poset, chain_poset)


def load_chain5():
    poset = FinitePoset.from_json_obj(
        json.load(open(fixture_path("chain5_poset.json"))))
    kernel = FiniteKernel.from_json_obj(
        json.load(open(fixture_path("chain5_kernel.json"))))
    space = OrderedSpaceSpec.from_json_obj(
        json.load(open(fixture_path("chain5_space.json"))), poset)
    return poset, kernel, space


class TestKernel:
    def test_row_sum_validation_names_row(self):
        P = np.eye(3)
        P[1, 1] = 0.99
        with pytest.raises(ChainError, match="row 1"):
            FiniteKernel(P)

    def test_negative_entry(self):
        P = np.array([[1.1, -0.1], [0.0, 1.0]])
        with pytest.raises(ChainError):
            FiniteKernel(P)

    def test_stationary_distribution(self):
        P = np.array([[0.9, 0.1], [0.4, 0.6]])
        pi = FiniteKernel(P).stationary()
        assert np.abs(pi @ P - pi).max() < 1e-12
        assert pi == pytest.approx([0.8, 0.2])


class TestConditions:
    def test_chain5_all_pass(self):
        _, kernel, space = load_chain5()
        reports = check_all_conditions(space, kernel)
        assert [r.condition for r in reports] == [
            "order_preserving", "lyapunov_drift", "premetric_sandwich",
            "phi_second_moment_bounded", "swap", "rho_dominated_by_d_power",
            "moment_vs_lyapunov"]
        assert all(r.holds for r in reports)

    def test_order_preserving_detects_violation(self):
        # a kernel that maps the top state down and the bottom up
        poset = chain_poset(2)
        P = np.array([[0.0, 1.0], [1.0, 0.0]])
        ok, wit = check_order_preserving(FiniteKernel(P), poset)
        assert not ok
        i, j, U = wit
        assert (i, j) == (0, 1)
        assert U is not None

    def test_lyapunov_slack_sign(self):
        _, kernel, space = load_chain5()
        ok, info = check_lyapunov(kernel, space.V, space.lambda_, space.K)
        assert ok
        assert info["min_slack"] == pytest.approx(0.04, abs=1e-12)
        assert not check_lyapunov(kernel, space.V, space.lambda_, 0.01)[0]

    def test_swap_attained_epsilon(self):
        _, kernel, space = load_chain5()
        ok, info = check_swap_condition(space, kernel)
        assert ok
        assert info["attained_eps"] == pytest.approx(0.09, abs=1e-12)
        assert set(info["sublevel"]) == {0, 1, 2, 3, 4}

    def test_moment_bound_matches_geometry(self):
        # for the lazy-mixture kernel, P_t phi^2 = pi(phi^2) +
        # 0.55^t (phi^2 - pi(phi^2)), so the sup is attained at t = 0
        # where phi^2 is above its mean, else at stationarity
        _, kernel, space = load_chain5()
        M, truncated = moment_bound_M(kernel, space.phi)
        assert not truncated
        pi = kernel.stationary()
        stat = float(pi @ space.phi ** 2)
        expect = np.maximum(space.phi ** 2, stat)
        assert M == pytest.approx(expect, abs=1e-9)

    def test_spec_validation_rejects_bad_premetric(self):
        poset = chain_poset(2)
        with pytest.raises(ChainError, match="premetric"):
            OrderedSpaceSpec(poset=poset, d=np.array([[0.0, 5.0], [5.0, 0.0]]),
                             phi=np.array([0.0, 1.0]),
                             rho=np.zeros((2, 2)), V=np.ones(2),
                             gamma=0.5, K=1.0, swap_A=[0], swap_B=[1],
                             swap_eps=0.1)


class TestReturnTimes:
    def test_two_state_closed_form(self):
        # E_0[r^tau] for tau = hitting time of state 1 from 0 equals
        # r p / (1 - r (1 - p))
        p, r = 0.3, 1.05
        P = np.array([[1 - p, p], [0.5, 0.5]])
        rep = return_time_exp_moments(FiniteKernel(P), {1}, r)
        assert rep.moments[0] == pytest.approx(r * p / (1 - r * (1 - p)),
                                               abs=1e-10)

    def test_monte_carlo_oracle_ten_state_walk(self):
        # downward-biased lazy walk on 10 states, target {0}
        n, r = 10, 1.02
        P = np.zeros((n, n))
        for i in range(n):
            lo, hi = max(i - 1, 0), min(i + 1, n - 1)
            P[i, lo] += 0.5
            P[i, hi] += 0.2
            P[i, i] += 0.3
        rep = return_time_exp_moments(FiniteKernel(P), {0}, r)
        rng = np.random.default_rng(7)
        n_paths = 100_000
        start = 3
        state = np.full(n_paths, start)
        alive = np.ones(n_paths, dtype=bool)
        tau = np.zeros(n_paths, dtype=int)
        cdf = np.cumsum(P, axis=1)
        for t in range(1, 2000):
            u = rng.random(alive.sum())
            state[alive] = (cdf[state[alive]] < u[:, None]).sum(axis=1)
            tau[alive] = t
            alive &= state != 0
            if not alive.any():
                break
        assert not alive.any()
        vals = r ** tau.astype(float)
        mc = vals.mean()
        se = vals.std(ddof=1) / math.sqrt(n_paths)
        assert abs(rep.moments[start] - mc) < 3 * se

    def test_divergent_rate(self):
        P = np.array([[0.999, 0.001], [0.5, 0.5]])
        with pytest.raises(Divergent):
            return_time_exp_moments(FiniteKernel(P), {1}, 1.5)

    def test_empty_target(self):
        with pytest.raises(EmptyTarget):
            return_time_exp_moments(FiniteKernel(np.eye(2)), set(), 1.0)

    def test_lyapunov_comparison_bounds_chain5(self):
        # with M = 2 the target {V <= M} and rate 1/(lambda + K/M)
        # activate the comparison bounds, which must dominate the exact
        # moments with tiny slack
        _, kernel, space = load_chain5()
        lam, K, M = space.lambda_, space.K, 2.0
        assert M > max(K / (1 - lam), 1.0)
        rate = 1.0 / (lam + K / M)
        target = set(np.nonzero(space.V <= M)[0].tolist())
        rep = return_time_exp_moments(kernel, target, rate, V=space.V,
                                      lambda_=lam, K=K, M=M)
        assert rep.bound is not None
        assert np.all(rep.moments <= rep.bound + 1e-8)
        assert rep.verdict.all()
        assert rep.smallest_C is not None and rep.smallest_C > 0


class TestDominationTails:
    def test_ordered_start_is_zero(self):
        _, kernel, _ = load_chain5()
        tails = domination_time_tail(kernel, chain_poset(5), 1, 3, 10)
        assert np.all(tails == 0.0)

    def test_tail_decreasing_and_geometric(self):
        _, kernel, _ = load_chain5()
        poset = chain_poset(5)
        tails = domination_time_tail(kernel, poset, 3, 1, 30)
        assert tails[0] == 1.0
        assert np.all(np.diff(tails) <= 1e-12)
        # eventual decay rate bounded by the absorbed-chain spectral radius
        sr = absorbed_chain_second_eigenvalue(kernel, poset)
        assert sr < 1.0
        assert tails[30] <= tails[20] * sr ** 10 * 10  # loose envelope


class TestTheorem:
    def test_chain5_geometric_decay(self):
        poset, kernel, space = load_chain5()
        pairs = [(0, 4), (2, 3), (4, 1)]
        rep = theorem_main_verify(space, kernel, pairs, horizon=40,
                                  burn_in_frac=0.125)
        assert rep.verdict
        # the lazy-mixture chain has W = 0.55^t exactly
        for series in rep.series:
            assert np.allclose(series, 0.55 ** rep.times, atol=1e-9)
        for fit in rep.fits:
            assert fit.rate == pytest.approx(-math.log(0.55), abs=1e-6)
            assert fit.r_squared > 0.9999

    def test_antichain_counterexample_declines(self):
        poset = antichain_poset(2)
        kernel = FiniteKernel.from_json_obj(
            json.load(open(fixture_path("antichain2_kernel.json"))))
        space = OrderedSpaceSpec.from_json_obj(
            json.load(open(fixture_path("antichain2_space.json"))), poset)
        rep = theorem_main_verify(space, kernel, [(0, 1)], horizon=20)
        assert not rep.verdict
        assert np.all(rep.series[0] >= 0.5)

    def test_two_cycle_counterexample(self):
        # deterministic swap under the trivial order: order-preserving,
        # drift conditions hold, yet W stays at 1 forever
        poset = antichain_poset(2)
        kernel = FiniteKernel(np.array([[0.0, 1.0], [1.0, 0.0]]))
        space = OrderedSpaceSpec(
            poset=poset, d=1.0 - np.eye(2), phi=np.zeros(2),
            rho=1.0 - np.eye(2), V=np.ones(2), gamma=math.log(2.0), K=1.0,
            swap_A=[0], swap_B=[0], swap_eps=0.05)
        rep = theorem_main_verify(space, kernel, [(0, 1)], horizon=15)
        assert not rep.verdict
        assert np.all(rep.series[0] == 1.0)


class TestLemma33:
    def test_holds_on_chain5_marginals(self):
        poset, kernel, space = load_chain5()
        mu = np.zeros(5)
        mu[0] = 1.0
        nu = np.zeros(5)
        nu[4] = 1.0
        for _ in range(3):
            mu = mu @ kernel.P
            nu = nu @ kernel.P
        psi = 1.0 + space.phi ** 2
        rep = lemma33_verify(space, mu, nu, psi, k=0.5)
        assert rep.holds
        assert rep.lhs <= rep.rhs + 1e-10

    def test_premise_violation_reported(self):
        poset, kernel, space = load_chain5()
        mu = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
        nu = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
        with pytest.raises(PremiseViolated) as exc:
            lemma33_verify(space, mu, nu, np.ones(5), k=0.5)
        assert exc.value.premise == "ordered_coupling_exists"

    def test_bad_exponent(self):
        _, _, space = load_chain5()
        u = np.full(5, 0.2)
        with pytest.raises(ChainError):
            lemma33_verify(space, u, u, np.ones(5), k=1.5)


class TestLemma44:
    def make_joint(self, space, eps):
        # X uniform; Xtilde = X; Y = X with prob 1-eps, else pushed to
        # an unordered position
        n = 5
        w = np.zeros((n, n, n))
        for i in range(n):
            w[i, i, i] += 0.2 * (1 - eps)
            w[i, (i - 1) % n, i] += 0.2 * eps
        return w

    def test_inequality_holds(self):
        _, _, space = load_chain5()
        w = self.make_joint(space, 0.1)
        rep = lemma44_verify(space, w, p=2.0, q=2.0)
        assert rep.holds
        assert rep.details["epsilon"] <= 0.1 + 1e-12

    def test_marginal_mismatch(self):
        _, _, space = load_chain5()
        w = np.zeros((5, 5, 5))
        w[0, 0, 1] = 1.0
        with pytest.raises(MarginalMismatch):
            lemma44_verify(space, w, p=2.0, q=2.0)

    def test_conjugate_exponents_required(self):
        _, _, space = load_chain5()
        w = self.make_joint(space, 0.0)
        with pytest.raises(ChainError):
            lemma44_verify(space, w, p=2.0, q=3.0)


class TestCouplingConstruction:
    def test_simulation_matches_exact_enumeration(self):
        _, kernel, _ = load_chain5()
        poset = chain_poset(5)
        rng = np.random.default_rng(11)
        rep = coupling_construct_simulate(kernel, poset, x=3, y=1, t=6,
                                          n_paths=40_000, rng=rng,
                                          with_exact=True)
        assert rep.exact is not None
        assert abs(rep.estimate - rep.exact) < 4 * max(rep.std_error, 1e-4)
        # union-bound envelope from the exact domination tails
        assert rep.exact >= rep.lower_bound - 1e-12
        # the two x-copies keep the exact time-t law
        assert rep.marginal_tv_zx < 0.02
        assert rep.marginal_tv_zxt < 0.02

    def test_exact_probability_increases_with_time(self):
        _, kernel, _ = load_chain5()
        poset = chain_poset(5)
        vals = [triple_order_exact(kernel, poset, 3, 1, t) for t in range(5)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[-1] > vals[0]

    def test_ordered_start_latches_immediately(self):
        _, kernel, _ = load_chain5()
        poset = chain_poset(5)
        rng = np.random.default_rng(3)
        rep = coupling_construct_simulate(kernel, poset, x=1, y=3, t=4,
                                          n_paths=2000, rng=rng,
                                          with_exact=True)
        # x <= y initially, so the lower sandwich holds from the start and
        # only the upper latch can lag
        assert rep.tail_xy[0] == 0.0
        assert rep.exact == pytest.approx(1.0 - rep.tail_yx[4], abs=0.35)
