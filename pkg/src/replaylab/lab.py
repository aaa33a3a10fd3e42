"""Off-policy learning loop on tabular MDPs with exact error bookkeeping.

Each episode rolls out the current policy, appends the trajectory to a replay
buffer, fits a tabular Q estimate on mini-batches drawn under a sampling
scheme, then improves the policy by a softmax over the estimate.  Because the
MDP is known, the true error of the estimate and every quantity entering the
bound are computed exactly alongside.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import mdp as M
from .analysis import BoundInputs, corollary1_rhs, corollary2_weighted_rhs
from .errors import DivergenceError, ParameterError
from .replay import ReplayBuffer, Transition
from .weighting import SchemeKind, WeightScheme, age_weights

DESK_REFERENCE = WeightScheme(SchemeKind.ERE_APPROX)


def desk_scheme(kind, traj_len: int) -> WeightScheme:
    """Scheme rescaled to episodes of ``traj_len`` steps.

    ``L0`` and ``K`` become the episode length and ``eta`` is chosen so the
    recent-window ratio ``eta**L0`` matches the reference constants.  ``c_min``
    drops to one episode since desk runs hold thousands, not millions, of
    transitions.
    """
    kind = SchemeKind(kind)
    ref = DESK_REFERENCE
    eta = math.exp(ref.L0 * math.log(ref.eta) / traj_len)
    return WeightScheme(kind, N0=10**6, L0=traj_len, eta=eta, c_min=traj_len, K=traj_len)


@dataclass(frozen=True)
class FitSettings:
    batches: int = 50
    batch_size: int = 64
    target_every: int = 10
    lr: float = 0.5
    tau_start: float = 1.0
    tau_decay: float = 0.9
    tau_min: float = 0.05
    exact_fit: bool = False
    priority_eps: float = 1e-3

    def temperature(self, episode: int) -> float:
        """Temperature used for the improvement after ``episode`` (0-based)."""
        if self.tau_start == 0:
            return 0.0
        return max(self.tau_start * self.tau_decay**episode, self.tau_min)


@dataclass(frozen=True)
class LabConfig:
    scheme: WeightScheme
    episodes: int = 20
    traj_len: int = 40
    delta: float = 0.05
    step: int = 0
    fit: FitSettings = field(default_factory=FitSettings)

    def __post_init__(self):
        if self.episodes < 1 or self.traj_len < 1:
            raise ParameterError("episodes and traj_len must be positive")
        if not 0 <= self.step < self.traj_len:
            raise ParameterError("step must lie in [0, traj_len)")
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")
        self.scheme.validate()


@dataclass(frozen=True)
class RunRecord:
    episode: int
    value: float
    episode_return: float
    lhs_error: float
    rhs_bound: float
    eps_q: float
    w1: float
    lhs_weighted: float
    rhs_weighted: float
    eps_q_weighted: float
    w1_weighted: float
    lipschitz: float
    clip_violation: float
    buffer_size: int

    def as_dict(self):
        return asdict(self)


def _rollout(mdp, policy, length, rng):
    states = np.empty(length, dtype=np.int64)
    actions = np.empty(length, dtype=np.int64)
    s = rng.choice(mdp.n_states, p=mdp.rho0)
    cum_pi = np.cumsum(policy, axis=1)
    cum_T = np.cumsum(mdp.transition, axis=2)
    for j in range(length):
        a = min(int(np.searchsorted(cum_pi[s], rng.random() * cum_pi[s, -1], side="right")), mdp.n_actions - 1)
        states[j], actions[j] = s, a
        s = min(int(np.searchsorted(cum_T[s, a], rng.random() * cum_T[s, a, -1], side="right")), mdp.n_states - 1)
    next_states = np.append(states[1:], s)
    return states, actions, next_states


def _sampling_weights(scheme, n, buf):
    if scheme.kind is SchemeKind.PRIORITY:
        return buf.weights.copy()
    # buffer index 0 is the oldest entry, so reverse the age order
    return age_weights(scheme, n)[::-1].copy()


def _fit(mdp, q, policy, buf, scheme, settings, rng, visits):
    """Mini-batch least-squares steps toward frozen Bellman targets."""
    S, A = mdp.n_states, mdp.n_actions
    st, ac = buf.column("state"), buf.column("action")
    rw, nx = buf.column("reward"), buf.column("next_state")
    probs = buf.probabilities()
    visits += probs * settings.batches * settings.batch_size
    for b in range(settings.batches):
        if b % settings.target_every == 0:
            target_v = np.sum(policy * q, axis=1)
        idx = buf.sample_batch(settings.batch_size, rng)
        cell = st[idx] * A + ac[idx]
        y = rw[idx] + mdp.gamma * target_v[nx[idx]]
        resid = y - q.ravel()[cell]
        count = np.bincount(cell, minlength=S * A)
        total = np.bincount(cell, weights=resid, minlength=S * A)
        hit = count > 0
        flat = q.ravel()
        flat[hit] += settings.lr * total[hit] / count[hit]
        q = flat.reshape(S, A)
        if scheme.kind is SchemeKind.PRIORITY:
            for i, r in zip(idx, np.abs(resid)):
                buf.set_priority(int(i), float(r) + settings.priority_eps, scheme)
    return q


def _lhs(q_hat, q_true, rho_bar, pi_d):
    return float(rho_bar @ np.sum(pi_d * np.abs(q_hat - q_true), axis=1))


def run_off_policy_loop(mdp: M.TabularMDP, config: LabConfig, seed: int) -> List[RunRecord]:
    """Run ``config.episodes`` episodes; one record per episode."""
    rng = np.random.default_rng(seed)
    settings = config.fit
    scheme = config.scheme
    S, A = mdp.n_states, mdp.n_actions
    L, i = config.traj_len, config.step
    q_max = mdp.q_max
    buf = ReplayBuffer()
    q = np.zeros((S, A))
    policy = M.uniform_policy(mdp)
    visits = np.zeros(0)
    policies, starts, occupancies, trajectories = [], [], [], []
    records = []
    for e in range(config.episodes):
        states, actions, nexts = _rollout(mdp, policy, L, rng)
        t0 = buf.last_time
        for j in range(L):
            s, a = int(states[j]), int(actions[j])
            buf.push(Transition(s, a, float(mdp.reward[s, a]), int(nexts[j]), e, j, t0 + j + 1))
        visits = np.concatenate([visits, np.zeros(L)])
        n = len(buf)
        if scheme.kind is not SchemeKind.PRIORITY:
            buf.set_weights(_sampling_weights(scheme, n, buf))
        if settings.exact_fit:
            q = M.exact_q(mdp, policy)
        else:
            q = _fit(mdp, q, policy, buf, scheme, settings, rng, visits)
        if not np.all(np.abs(q) <= 10 * q_max):
            raise DivergenceError(f"Q estimate left [-{10 * q_max:g}, {10 * q_max:g}] in episode {e}")
        clip_violation = float(max(0.0, -q.min(), q.max() - q_max))
        q_hat = np.clip(q, 0.0, q_max)

        start_i = M.state_distribution_at(mdp, policy, i)
        policies.append(policy)
        starts.append(start_i)
        occupancies.append(M.occupancy_measure(mdp, start_i, policy))
        trajectories.append((states, actions))
        ep_w = np.bincount(buf.column("episode"), weights=visits, minlength=e + 1)
        ep_w = np.maximum(ep_w, 1e-300)

        q_true = M.exact_q(mdp, policy)
        lip = max(M.lipschitz_constant(q_hat, mdp.action_coords), M.lipschitz_constant(q_true, mdp.action_coords))
        pi_d, rho_bar = M.behavior_policy(mdp, policies, starts, None, occupancies)
        pi_dw, rho_bar_w = M.behavior_policy(mdp, policies, starts, ep_w, occupancies)
        eps_q, w1 = M.empirical_errors(mdp, trajectories, q_hat, policy, pi_d, i, L)
        eps_w, w1_w = M.empirical_errors(mdp, trajectories, q_hat, policy, pi_dw, i, L, ep_w)
        base = BoundInputs(
            r_max=mdp.r_max, gamma=mdp.gamma, lipschitz=lip, diam_A=mdp.diam_A,
            delta=config.delta, episodes=e + 1, step=i, horizon=L,
            bellman_err=eps_q, w1_err=w1,
        )
        rhs = corollary1_rhs(base)
        rhs_w = corollary2_weighted_rhs(
            replace(base, bellman_err=eps_w, w1_err=w1_w, episode_weights=tuple(ep_w))
        )
        disc = mdp.gamma ** np.arange(L)
        records.append(
            RunRecord(
                episode=e + 1,
                value=0.0,
                episode_return=float(disc @ mdp.reward[states, actions]),
                lhs_error=_lhs(q_hat, q_true, rho_bar, pi_d),
                rhs_bound=float(rhs),
                eps_q=float(eps_q),
                w1=float(w1),
                lhs_weighted=_lhs(q_hat, q_true, rho_bar_w, pi_dw),
                rhs_weighted=float(rhs_w),
                eps_q_weighted=float(eps_w),
                w1_weighted=float(w1_w),
                lipschitz=float(lip),
                clip_violation=clip_violation,
                buffer_size=n,
            )
        )
        policy = M.softmax_policy(q_hat, settings.temperature(e))
        records[-1] = replace(records[-1], value=M.policy_value(mdp, policy))
    return records


def _final_check(args):
    mdp, config, seed = args
    last = run_off_policy_loop(mdp, config, seed)[-1]
    return last.lhs_error > last.rhs_bound


def bound_violation_rate(
    mdp: M.TabularMDP,
    config: LabConfig,
    trials: int,
    delta: Optional[float] = None,
    seed: int = 0,
    workers: int = 1,
) -> float:
    """Fraction of independent runs whose final error exceeds its bound."""
    if trials < 1:
        raise ParameterError("trials must be positive")
    if delta is not None:
        config = replace(config, delta=delta)
    seeds = np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint32)
    jobs = [(mdp, config, int(s)) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            hits = list(pool.map(_final_check, jobs))
    else:
        hits = [_final_check(j) for j in jobs]
    return float(np.mean(hits))


def _final_value(args):
    mdp, config, seed = args
    return run_off_policy_loop(mdp, config, seed)[-1].value


def final_values(mdp: M.TabularMDP, config: LabConfig, seeds, workers: int = 1) -> np.ndarray:
    """Final policy value of one run per seed, in seed order."""
    jobs = [(mdp, config, int(s)) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return np.array(list(pool.map(_final_value, jobs)))
    return np.array([_final_value(j) for j in jobs])


def pooled_standard_error(a, b) -> float:
    """Standard error of the difference of two sample means."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size))
