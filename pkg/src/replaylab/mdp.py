"""Exact dynamic-programming oracles on finite MDPs.

Shapes: transitions ``(S, A, S)``, rewards and Q tables ``(S, A)``, policies
``(S, A)`` with rows summing to one, state distributions ``(S,)``.  Actions
carry a real coordinate each, which defines the metric used by the
1-Wasserstein distance and the action-space diameter.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import ParameterError

ROW_TOL = 1e-12
ITERATIVE_THRESHOLD = 2000


@dataclass
class TabularMDP:
    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    rho0: np.ndarray
    action_coords: np.ndarray
    r_max: float = 1.0
    name: str = "mdp"

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.rho0 = np.asarray(self.rho0, dtype=np.float64)
        self.action_coords = np.asarray(self.action_coords, dtype=np.float64)
        S, A = self.reward.shape
        if self.transition.shape != (S, A, S):
            raise ParameterError(f"transition shape {self.transition.shape} != {(S, A, S)}")
        if self.rho0.shape != (S,) or self.action_coords.shape != (A,):
            raise ParameterError("rho0 must have n_states entries, action_coords n_actions")
        if not 0 < self.gamma < 1:
            raise ParameterError("gamma must lie in (0, 1)")
        if np.any(self.transition < 0) or np.any(
            np.abs(self.transition.sum(axis=2) - 1) > ROW_TOL
        ):
            raise ParameterError("every T[s][a] must be a distribution")
        check_distribution(self.rho0, "rho0")
        if np.any(self.reward < 0) or np.any(self.reward > self.r_max):
            raise ParameterError(f"rewards must lie in [0, r_max={self.r_max}]")

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def diam_A(self) -> float:
        return float(self.action_coords.max() - self.action_coords.min())

    @property
    def q_max(self) -> float:
        return self.r_max / (1 - self.gamma)


def check_distribution(p: np.ndarray, what: str = "distribution") -> None:
    if np.any(p < -ROW_TOL) or abs(p.sum() - 1) > 1e-10:
        raise ParameterError(f"{what} must be non-negative and sum to 1")


def check_policy(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ParameterError(f"policy shape {policy.shape} does not match the MDP")
    if np.any(policy < -ROW_TOL) or np.any(np.abs(policy.sum(axis=1) - 1) > ROW_TOL):
        raise ParameterError("policy rows must be distributions")
    return policy


def uniform_policy(mdp: TabularMDP) -> np.ndarray:
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def softmax_policy(q: np.ndarray, temperature: float) -> np.ndarray:
    """Boltzmann policy over Q; temperature 0 splits mass evenly over argmaxes."""
    if temperature < 0:
        raise ParameterError("temperature must be non-negative")
    if temperature == 0:
        best = q >= q.max(axis=1, keepdims=True) - 1e-12
        return best / best.sum(axis=1, keepdims=True)
    z = (q - q.max(axis=1, keepdims=True)) / temperature
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def state_transition_matrix(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """``P[s, s'] = sum_a pi(a|s) T(s'|s, a)``."""
    return np.einsum("sa,sat->st", policy, mdp.transition)


def bellman_flow(mdp: TabularMDP, rho_init, policy, rho) -> np.ndarray:
    """``(1 - gamma) rho_init + gamma * (rho pushed through pi and T)``."""
    P = state_transition_matrix(mdp, policy)
    return (1 - mdp.gamma) * np.asarray(rho_init) + mdp.gamma * (np.asarray(rho) @ P)


def occupancy_measure(mdp: TabularMDP, rho_init, policy) -> np.ndarray:
    """Normalized discounted state occupancy from ``rho_init`` under ``policy``."""
    rho_init = np.asarray(rho_init, dtype=np.float64)
    check_distribution(rho_init, "initial distribution")
    policy = check_policy(mdp, policy)
    P = state_transition_matrix(mdp, policy)
    g = mdp.gamma
    if mdp.n_states <= ITERATIVE_THRESHOLD:
        rho = linalg.solve(np.eye(mdp.n_states) - g * P.T, (1 - g) * rho_init)
    else:
        rho = rho_init.copy()
        # contraction factor gamma in l1: iterate until the residual is tiny
        for _ in range(int(math.log(1e-13) / math.log(g)) + 10):
            nxt = (1 - g) * rho_init + g * (rho @ P)
            if np.abs(nxt - rho).sum() < 1e-13:
                rho = nxt
                break
            rho = nxt
    rho = np.where(np.abs(rho) < 1e-15, 0.0, rho)
    residual = np.abs(rho - bellman_flow(mdp, rho_init, policy, rho)).sum()
    assert residual <= 1e-10, f"occupancy fixed-point residual {residual:.3e}"
    return rho


def state_distribution_at(mdp: TabularMDP, policy, step: int, rho_init=None) -> np.ndarray:
    """State distribution after ``step`` transitions under ``policy``."""
    rho = mdp.rho0 if rho_init is None else np.asarray(rho_init, dtype=np.float64)
    P = state_transition_matrix(mdp, policy)
    for _ in range(step):
        rho = rho @ P
    return rho


def bellman_apply(mdp: TabularMDP, policy, q, gamma: Optional[float] = None) -> np.ndarray:
    """``r + gamma * E_{s' ~ T, a' ~ pi} Q(s', a')``; ``gamma`` overrides the MDP's."""
    g = mdp.gamma if gamma is None else gamma
    v = np.sum(np.asarray(policy) * np.asarray(q), axis=1)
    return mdp.reward + g * (mdp.transition @ v)


def exact_q(mdp: TabularMDP, policy) -> np.ndarray:
    """Q function of ``policy`` from the linear Bellman system."""
    policy = check_policy(mdp, policy)
    S, A = mdp.n_states, mdp.n_actions
    M = np.einsum("sat,tb->satb", mdp.transition, policy).reshape(S * A, S * A)
    q = linalg.solve(np.eye(S * A) - mdp.gamma * M, mdp.reward.ravel()).reshape(S, A)
    return np.clip(q, 0.0, mdp.q_max)


def policy_value(mdp: TabularMDP, policy) -> float:
    """Expected discounted return from ``rho0``."""
    q = exact_q(mdp, policy)
    return float(mdp.rho0 @ np.sum(policy * q, axis=1))


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def w1_distance(p, q, action_coords) -> float:
    """Exact 1-Wasserstein distance on the real line via the CDF area."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    x = np.asarray(action_coords, dtype=np.float64)
    if p.shape != q.shape or p.shape != x.shape:
        raise ParameterError("distributions and coordinates must share one support")
    order = np.argsort(x, kind="stable")
    cdf_gap = np.cumsum(p[order] - q[order])[:-1]
    return float(np.abs(cdf_gap) @ np.diff(x[order]))


def policy_w1(pi_a, pi_b, action_coords) -> np.ndarray:
    """Per-state W1 between two policy tables."""
    x = np.asarray(action_coords, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    gaps = np.diff(x[order])
    cdf_gap = np.cumsum(np.asarray(pi_a)[:, order] - np.asarray(pi_b)[:, order], axis=1)[:, :-1]
    return np.abs(cdf_gap) @ gaps


def lipschitz_constant(q, action_coords) -> float:
    """Largest per-state slope of Q over the action coordinates."""
    x = np.asarray(action_coords, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    dx = np.diff(x[order])
    dq = np.abs(np.diff(np.asarray(q)[:, order], axis=1))
    same = dx == 0
    if np.any(dq[:, same] > 1e-12):
        return math.inf
    slopes = dq[:, ~same] / dx[~same]
    return float(slopes.max()) if slopes.size else 0.0


def behavior_policy(
    mdp: TabularMDP,
    episode_policies: Sequence[np.ndarray],
    episode_start_dists: Sequence[np.ndarray],
    weights: Optional[Sequence[float]] = None,
    occupancies: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Occupancy-weighted mixture of episode policies and the mixed start distribution.

    Rows at states no episode reaches are set uniform.  ``occupancies`` may
    pass precomputed per-episode occupancy measures.
    """
    if len(episode_policies) == 0 or len(episode_policies) != len(episode_start_dists):
        raise ParameterError("need one start distribution per episode policy")
    w = np.ones(len(episode_policies)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(episode_policies),) or np.any(w <= 0):
        raise ParameterError("episode weights must be positive, one per episode")
    if occupancies is None:
        occupancies = [
            occupancy_measure(mdp, start, pi)
            for pi, start in zip(episode_policies, episode_start_dists)
        ]
    occ = np.asarray(occupancies)
    pis = np.asarray(episode_policies)
    numer = np.einsum("e,es,esa->sa", w, occ, pis)
    denom = np.einsum("e,es->s", w, occ)
    mixed = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    reached = denom > 0
    mixed[reached] = numer[reached] / denom[reached, None]
    mixed /= mixed.sum(axis=1, keepdims=True)
    rho_bar = np.einsum("e,es->s", w, np.asarray(episode_start_dists)) / w.sum()
    return mixed, rho_bar


def verify_flow_lemma(
    mdp: TabularMDP,
    episode_policies: Sequence[np.ndarray],
    episode_start_dists: Sequence[np.ndarray],
    weights: Optional[Sequence[float]] = None,
) -> float:
    """L1 gap between the averaged occupancy and the mixture policy's occupancy."""
    w = np.ones(len(episode_policies)) if weights is None else np.asarray(weights, dtype=float)
    occ = [occupancy_measure(mdp, start, pi) for pi, start in zip(episode_policies, episode_start_dists)]
    mixed_pi, rho_bar = behavior_policy(mdp, episode_policies, episode_start_dists, w, occ)
    averaged = np.einsum("e,es->s", w, np.asarray(occ)) / w.sum()
    return float(np.abs(averaged - occupancy_measure(mdp, rho_bar, mixed_pi)).sum())


def empirical_errors(
    mdp: TabularMDP,
    trajectories: Sequence[Tuple[np.ndarray, np.ndarray]],
    q_hat,
    pi_n,
    behavior,
    step: int,
    horizon: int,
    episode_weights: Optional[Sequence[float]] = None,
) -> Tuple[float, float]:
    """Averaging-discounted Bellman error and policy mismatch over stored trajectories.

    ``trajectories`` holds one ``(states, actions)`` pair per episode.  Returns
    ``(bellman_err, w1_err)``.  Step ``j`` of every trajectory contributes with
    factor ``(1 - gamma) * gamma**(j - step)`` for ``step <= j < horizon``.
    """
    if step >= horizon:
        warnings.warn("step >= horizon: empty averaging range", RuntimeWarning, stacklevel=2)
        return 0.0, 0.0
    n_ep = len(trajectories)
    w = np.ones(n_ep) if episode_weights is None else np.asarray(episode_weights, dtype=float)
    residual = np.abs(np.asarray(q_hat) - bellman_apply(mdp, pi_n, q_hat))
    mismatch = policy_w1(pi_n, behavior, mdp.action_coords)
    eps = w1 = 0.0
    for weight, (states, actions) in zip(w, trajectories):
        states = np.asarray(states)[step:horizon]
        actions = np.asarray(actions)[step:horizon]
        disc = (1 - mdp.gamma) * mdp.gamma ** np.arange(states.size)
        eps += weight * float(disc @ residual[states, actions])
        w1 += weight * float(disc @ mismatch[states])
    return eps / w.sum(), w1 / w.sum()
