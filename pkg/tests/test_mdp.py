import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from replaylab import mdp as M
from replaylab.errors import ParameterError
from replaylab.verify import random_mdp, random_policy


def one_state(r=1.0, gamma=0.9):
    return M.TabularMDP(np.ones((1, 1, 1)), [[r]], gamma, [1.0], [0.0], 1.0)


def two_cycle(gamma):
    T = np.zeros((2, 1, 2))
    T[0, 0, 1] = T[1, 0, 0] = 1.0
    return M.TabularMDP(T, np.zeros((2, 1)), gamma, [1.0, 0.0], [0.0], 1.0)


def lp_w1(p, q, x):
    n = len(p)
    cost = np.abs(np.subtract.outer(x, x)).ravel()
    A = []
    for i in range(n):
        row = np.zeros((n, n)); row[i, :] = 1; A.append(row.ravel())
    for j in range(n):
        col = np.zeros((n, n)); col[:, j] = 1; A.append(col.ravel())
    return linprog(cost, A_eq=np.array(A), b_eq=np.concatenate([p, q]), bounds=(0, None), method="highs").fun


class TestValidation:
    def test_bad_rows(self):
        T = np.full((2, 1, 2), 0.6)
        with pytest.raises(ParameterError):
            M.TabularMDP(T, np.zeros((2, 1)), 0.9, [1, 0], [0.0])

    def test_reward_range(self):
        with pytest.raises(ParameterError):
            M.TabularMDP(np.ones((1, 1, 1)), [[2.0]], 0.9, [1.0], [0.0], r_max=1.0)

    def test_gamma(self):
        with pytest.raises(ParameterError):
            M.TabularMDP(np.ones((1, 1, 1)), [[0.5]], 1.0, [1.0], [0.0])

    def test_policy_rows(self):
        m = one_state()
        with pytest.raises(ParameterError):
            M.exact_q(m, np.array([[0.5]]))


class TestOccupancy:
    def test_absorbing(self):
        T = np.zeros((3, 1, 3))
        T[:, 0, 2] = 1.0
        m = M.TabularMDP(T, np.zeros((3, 1)), 0.9, [1, 0, 0], [0.0])
        rho = M.occupancy_measure(m, [0, 0, 1.0], np.ones((3, 1)))
        assert rho == pytest.approx([0, 0, 1.0], abs=1e-15)

    @pytest.mark.parametrize("gamma", [0.1, 0.5, 0.9, 0.99])
    def test_two_cycle(self, gamma):
        m = two_cycle(gamma)
        rho = M.occupancy_measure(m, [1.0, 0.0], np.ones((2, 1)))
        assert rho == pytest.approx([1 / (1 + gamma), gamma / (1 + gamma)], rel=1e-13)

    def test_iterative_path(self, monkeypatch):
        rng = np.random.default_rng(0)
        m = random_mdp(rng, 12, 3, 0.9)
        pi = random_policy(rng, 12, 3)
        direct = M.occupancy_measure(m, m.rho0, pi)
        monkeypatch.setattr(M, "ITERATIVE_THRESHOLD", 5)
        iterated = M.occupancy_measure(m, m.rho0, pi)
        assert np.abs(direct - iterated).sum() <= 1e-10

    def test_matches_discounted_series(self):
        rng = np.random.default_rng(1)
        m = random_mdp(rng, 6, 2, 0.8)
        pi = random_policy(rng, 6, 2)
        P = M.state_transition_matrix(m, pi)
        series, d = np.zeros(6), m.rho0.copy()
        for k in range(400):
            series += (1 - m.gamma) * m.gamma**k * d
            d = d @ P
        assert M.occupancy_measure(m, m.rho0, pi) == pytest.approx(series, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_occupancy_is_distribution(seed):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng)
    rho = M.occupancy_measure(m, m.rho0, random_policy(rng, m.n_states, m.n_actions))
    assert np.all(rho >= 0)
    assert abs(rho.sum() - 1) <= 1e-12


class TestQ:
    def test_single_state(self):
        assert M.exact_q(one_state(), np.ones((1, 1)))[0, 0] == pytest.approx(10.0, rel=1e-14)

    def test_zero_reward(self):
        rng = np.random.default_rng(2)
        m = random_mdp(rng, 4, 3)
        m.reward[:] = 0
        assert np.all(M.exact_q(m, random_policy(rng, 4, 3)) == 0)

    def test_fixed_point_random(self):
        rng = np.random.default_rng(3)
        m = random_mdp(rng, 5, 3)
        pi = random_policy(rng, 5, 3)
        q = M.exact_q(m, pi)
        assert np.abs(M.bellman_apply(m, pi, q) - q).max() <= 1e-10
        assert q.min() >= 0 and q.max() <= m.q_max

    def test_bellman_examples(self):
        rng = np.random.default_rng(4)
        m = random_mdp(rng, 4, 2)
        pi = random_policy(rng, 4, 2)
        assert np.array_equal(M.bellman_apply(m, pi, np.zeros((4, 2))), m.reward)
        assert np.array_equal(M.bellman_apply(m, pi, rng.random((4, 2)) * 50, gamma=0.0), m.reward)

    def test_policy_iteration_oracle(self):
        # classical policy iteration reaches the value-iteration optimum
        rng = np.random.default_rng(5)
        m = random_mdp(rng, 6, 3, 0.9)
        pi = M.uniform_policy(m)
        for _ in range(50):
            pi = M.softmax_policy(M.exact_q(m, pi), 0.0)
        v = np.zeros(6)
        for _ in range(2000):
            v = (m.reward + m.gamma * m.transition @ v).max(axis=1)
        q = M.exact_q(m, pi)
        assert np.sum(pi * q, axis=1) == pytest.approx(v, abs=1e-9)


class TestBehaviorPolicy:
    def setup_method(self):
        self.rng = np.random.default_rng(6)
        self.m = random_mdp(self.rng, 3, 2, 0.9)

    def test_single_episode(self):
        pi = random_policy(self.rng, 3, 2)
        mixed, rho_bar = M.behavior_policy(self.m, [pi], [self.m.rho0])
        assert mixed == pytest.approx(pi, abs=1e-15)
        assert rho_bar == pytest.approx(self.m.rho0)

    def test_identical_policies(self):
        pi = random_policy(self.rng, 3, 2)
        starts = [self.rng.dirichlet(np.ones(3)) for _ in range(4)]
        mixed, _ = M.behavior_policy(self.m, [pi] * 4, starts)
        assert mixed == pytest.approx(pi, abs=1e-14)

    def test_brute_force_mixture(self):
        pis = [random_policy(self.rng, 3, 2) for _ in range(2)]
        starts = [self.rng.dirichlet(np.ones(3)) for _ in range(2)]
        # independent occupancies from the truncated discounted series
        occ = []
        for pi, start in zip(pis, starts):
            P = np.einsum("sa,sat->st", pi, self.m.transition)
            d, tot = start.copy(), np.zeros(3)
            for k in range(600):
                tot += (1 - self.m.gamma) * self.m.gamma**k * d
                d = d @ P
            occ.append(tot)
        expect = np.zeros((3, 2))
        for s in range(3):
            den = occ[0][s] + occ[1][s]
            for a in range(2):
                expect[s, a] = (pis[0][s, a] * occ[0][s] + pis[1][s, a] * occ[1][s]) / den
        mixed, rho_bar = M.behavior_policy(self.m, pis, starts)
        assert mixed == pytest.approx(expect, abs=1e-12)
        assert rho_bar == pytest.approx((starts[0] + starts[1]) / 2)

    def test_unreachable_rows_uniform(self):
        T = np.zeros((3, 2, 3))
        T[:, :, 0] = 1.0
        m = M.TabularMDP(T, np.zeros((3, 2)), 0.9, [1, 0, 0], [0.0, 1.0])
        pi = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        mixed, _ = M.behavior_policy(m, [pi], [m.rho0])
        assert mixed[1:] == pytest.approx(np.full((2, 2), 0.5))

    def test_rejects_bad_inputs(self):
        pi = random_policy(self.rng, 3, 2)
        with pytest.raises(ParameterError):
            M.behavior_policy(self.m, [], [])
        with pytest.raises(ParameterError):
            M.behavior_policy(self.m, [pi], [self.m.rho0], weights=[0.0])


class TestFlowLemma:
    def test_single_episode(self):
        rng = np.random.default_rng(7)
        m = random_mdp(rng, 5, 3)
        assert M.verify_flow_lemma(m, [random_policy(rng, 5, 3)], [m.rho0]) <= 1e-10

    def test_random_instance(self):
        rng = np.random.default_rng(8)
        m = random_mdp(rng, 6, 3)
        pis = [random_policy(rng, 6, 3) for _ in range(4)]
        starts = [rng.dirichlet(np.ones(6)) for _ in range(4)]
        assert M.verify_flow_lemma(m, pis, starts) <= 1e-8
        assert M.verify_flow_lemma(m, pis, starts, weights=[1, 2, 3, 4]) <= 1e-8

    def test_contraction(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            m = random_mdp(rng)
            pi = random_policy(rng, m.n_states, m.n_actions)
            r1, r2 = (rng.dirichlet(np.ones(m.n_states)) for _ in range(2))
            lhs = M.tv_distance(M.bellman_flow(m, m.rho0, pi, r1), M.bellman_flow(m, m.rho0, pi, r2))
            assert lhs <= m.gamma * M.tv_distance(r1, r2) + 1e-15


class TestW1:
    def test_examples(self):
        assert M.w1_distance([0.3, 0.7], [0.3, 0.7], [0, 1]) == 0.0
        assert M.w1_distance([1, 0], [0, 1], [0, 1]) == 1.0
        assert M.w1_distance([0.5, 0.5], [1, 0], [0, 1]) == pytest.approx(0.5)
        assert lp_w1(np.array([0.5, 0.5]), np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.5)

    def test_unsorted_coords(self):
        x = np.array([2.0, -1.0, 0.5])
        p, q = np.array([0.2, 0.5, 0.3]), np.array([0.6, 0.1, 0.3])
        assert M.w1_distance(p, q, x) == pytest.approx(lp_w1(p, q, x), abs=1e-12)

    def test_mismatched_support(self):
        with pytest.raises(ParameterError):
            M.w1_distance([1.0], [0.5, 0.5], [0, 1])

    def test_policy_w1_rows(self):
        rng = np.random.default_rng(10)
        a, b = random_policy(rng, 4, 5), random_policy(rng, 4, 5)
        x = rng.random(5)
        assert M.policy_w1(a, b, x) == pytest.approx([M.w1_distance(a[s], b[s], x) for s in range(4)])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10**6))
def test_w1_metric_axioms_and_lp(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, n)
    p, q, r = (rng.dirichlet(np.ones(n)) for _ in range(3))
    d = lambda a, b: M.w1_distance(a, b, x)
    assert abs(d(p, q) - d(q, p)) <= 1e-12
    assert d(p, p) <= 1e-12
    assert d(p, r) <= d(p, q) + d(q, r) + 1e-12
    assert d(p, q) == pytest.approx(lp_w1(p, q, x), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_lipschitz_wasserstein(seed):
    rng = np.random.default_rng(seed)
    S, A = int(rng.integers(1, 5)), int(rng.integers(2, 8))
    x = np.sort(rng.uniform(0, 1, A))
    lip = rng.uniform(0.1, 4)
    q = np.cumsum(np.concatenate([rng.uniform(0, 5, (S, 1)), rng.uniform(-1, 1, (S, A - 1)) * lip * np.diff(x)], axis=1), axis=1)
    assert M.lipschitz_constant(q, x) <= lip + 1e-12
    p1, p2 = random_policy(rng, S, A), random_policy(rng, S, A)
    gap = np.abs((p1 * q).sum(1) - (p2 * q).sum(1))
    assert np.all(gap <= lip * M.policy_w1(p1, p2, x) + 1e-12)


class TestLipschitz:
    def test_slope(self):
        assert M.lipschitz_constant(np.array([[0.0, 1.0, 1.5]]), [0.0, 0.5, 1.0]) == pytest.approx(2.0)

    def test_duplicate_coords(self):
        assert M.lipschitz_constant(np.array([[0.0, 1.0]]), [0.3, 0.3]) == np.inf
        assert M.lipschitz_constant(np.array([[1.0, 1.0]]), [0.3, 0.3]) == 0.0


class TestEmpiricalErrors:
    def setup_method(self):
        self.rng = np.random.default_rng(11)
        self.m = random_mdp(self.rng, 4, 3, 0.9)

    def test_exact_q_has_zero_bellman_error(self):
        pi = random_policy(self.rng, 4, 3)
        trajs = [(self.rng.integers(0, 4, 30), self.rng.integers(0, 3, 30)) for _ in range(3)]
        eps, _ = M.empirical_errors(self.m, trajs, M.exact_q(self.m, pi), pi, pi, 0, 30)
        assert eps <= 1e-10

    def test_same_policy_zero_mismatch(self):
        pi = random_policy(self.rng, 4, 3)
        trajs = [(self.rng.integers(0, 4, 10), self.rng.integers(0, 3, 10))]
        _, w1 = M.empirical_errors(self.m, trajs, np.zeros((4, 3)), pi, pi, 2, 10)
        assert w1 == 0.0

    def test_brute_force_resummation(self):
        pi_n, beh = random_policy(self.rng, 4, 3), random_policy(self.rng, 4, 3)
        q_hat = self.rng.uniform(0, 10, (4, 3))
        trajs = [(np.array([0, 1, 2, 3, 1]), np.array([0, 2, 1, 1, 0])), (np.array([3, 3, 0, 2, 2]), np.array([1, 1, 2, 0, 2]))]
        w = [2.0, 0.5]
        i, L = 1, 4
        target = self.m.reward + self.m.gamma * np.einsum("sat,tb,tb->sa", self.m.transition, pi_n, q_hat)
        eps = w1 = 0.0
        for we, (s, a) in zip(w, trajs):
            for j in range(i, L):
                f = (1 - self.m.gamma) * self.m.gamma ** (j - i) * we
                eps += f * abs(q_hat[s[j], a[j]] - target[s[j], a[j]])
                w1 += f * M.w1_distance(pi_n[s[j]], beh[s[j]], self.m.action_coords)
        got = M.empirical_errors(self.m, trajs, q_hat, pi_n, beh, i, L, episode_weights=w)
        assert got == pytest.approx((eps / 2.5, w1 / 2.5), rel=1e-13)

    def test_degenerate_range(self):
        pi = random_policy(self.rng, 4, 3)
        with pytest.warns(RuntimeWarning):
            assert M.empirical_errors(self.m, [([0], [0])], np.zeros((4, 3)), pi, pi, 5, 5) == (0.0, 0.0)
