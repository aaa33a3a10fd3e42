import math

import numpy as np
import pytest

from replaylab import envs, lab, mdp as M
from replaylab.errors import DivergenceError, ParameterError
from replaylab.weighting import SchemeKind, WeightScheme


def config(kind="ere-approx", **kw):
    traj = kw.pop("traj_len", 20)
    return lab.LabConfig(lab.desk_scheme(kind, traj), traj_len=traj, **kw)


def test_desk_scheme_keeps_recent_ratio():
    s = lab.desk_scheme("ere-approx", 40)
    assert s.L0 == s.K == s.c_min == 40
    assert s.eta ** s.L0 == pytest.approx(0.996**1000, rel=1e-12)


def test_bookkeeping():
    recs = lab.run_off_policy_loop(envs.chain(), config(episodes=5), seed=0)
    assert [r.episode for r in recs] == [1, 2, 3, 4, 5]
    assert [r.buffer_size for r in recs] == [20, 40, 60, 80, 100]
    for r in recs:
        assert all(math.isfinite(v) for v in r.as_dict().values())


@pytest.mark.parametrize("kind", ["uniform", "one-over-age", "ere-approx", "ere-staged", "priority"])
def test_determinism(kind):
    cfg = config(kind, episodes=4)
    a = lab.run_off_policy_loop(envs.chain(), cfg, seed=11)
    b = lab.run_off_policy_loop(envs.chain(), cfg, seed=11)
    assert a == b
    c = lab.run_off_policy_loop(envs.chain(), cfg, seed=12)
    assert a != c


def test_greedy_exact_fit_is_policy_iteration():
    m = envs.chain(n_states=5)
    fit = lab.FitSettings(exact_fit=True, tau_start=0.0)
    recs = lab.run_off_policy_loop(m, lab.LabConfig(WeightScheme("uniform"), episodes=8, traj_len=20, fit=fit), seed=3)
    values = [r.value for r in recs]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    # classical policy iteration oracle
    pi = M.uniform_policy(m)
    for _ in range(30):
        pi = M.softmax_policy(M.exact_q(m, pi), 0.0)
    assert values[-1] == pytest.approx(M.policy_value(m, pi), rel=1e-12)
    # with exact Q the Bellman error vanishes
    assert max(r.eps_q for r in recs) <= 1e-10


def test_lhs_is_exact_expectation():
    m = envs.chain()
    fit = lab.FitSettings(exact_fit=True)
    recs = lab.run_off_policy_loop(m, lab.LabConfig(WeightScheme("uniform"), episodes=3, traj_len=20, fit=fit), seed=0)
    assert max(r.lhs_error for r in recs) <= 1e-10


def test_divergence():
    cfg = config("uniform", episodes=5, fit=lab.FitSettings(lr=5.0))
    with pytest.raises(DivergenceError):
        lab.run_off_policy_loop(envs.chain(), cfg, seed=0)


def test_rhs_matches_analysis():
    from replaylab.analysis import BoundInputs, corollary1_rhs

    m = envs.chain()
    rec = lab.run_off_policy_loop(m, config(episodes=3), seed=4)[-1]
    inputs = BoundInputs(1.0, 0.9, rec.lipschitz, 1.0, 0.05, 3, 0, 20, rec.eps_q, rec.w1)
    assert rec.rhs_bound == pytest.approx(corollary1_rhs(inputs), rel=1e-14)


def test_config_domain():
    with pytest.raises(ParameterError):
        config(episodes=0)
    with pytest.raises(ParameterError):
        config(step=20)
    with pytest.raises(ParameterError):
        config(delta=1.0)


def test_violation_rate_single_episode_is_zero():
    assert lab.bound_violation_rate(envs.chain(), config(episodes=1), trials=5, delta=0.05) == 0.0


def test_violation_rate_deterministic_mdp():
    # one action per state: every episode is the same cycle
    T = np.zeros((2, 1, 2))
    T[0, 0, 1] = T[1, 0, 0] = 1.0
    m = M.TabularMDP(T, [[0.0], [1.0]], 0.9, [1.0, 0.0], [0.0])
    cfg = lab.LabConfig(WeightScheme("uniform"), episodes=3, traj_len=10)
    assert lab.bound_violation_rate(m, cfg, trials=4) in (0.0, 1.0)
    # identical runs whatever the seed
    assert lab.run_off_policy_loop(m, cfg, 1) == lab.run_off_policy_loop(m, cfg, 2)


def test_violation_rate_needs_trials():
    with pytest.raises(ParameterError):
        lab.bound_violation_rate(envs.chain(), config(episodes=1), trials=0)


def test_final_values_and_pooled_se():
    vals = lab.final_values(envs.chain(), config(episodes=2), seeds=[0, 1, 2])
    assert vals.shape == (3,)
    assert lab.pooled_standard_error([1, 2, 3], [1, 2, 3]) == pytest.approx(math.sqrt(2 / 3))
