"""Small testbed environments and a plain-text table format for them.

File format (``#`` starts a comment, blank lines ignored)::

    n_states 3
    n_actions 2
    gamma 0.9
    r_max 1.0            # optional, defaults to 1
    T <s> <a> p_0 ... p_{S-1}     # one row per (s, a)
    r <s> r_0 ... r_{A-1}          # one row per state
    rho0 p_0 ... p_{S-1}
    coords x_0 ... x_{A-1}
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParameterError
from .mdp import TabularMDP

MOVE_COORDS = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])


def chain(n_states: int = 8, slip: float = 0.1, gamma: float = 0.9) -> TabularMDP:
    """Noisy chain: actions step by -1, 0, +1, +2; reward 1 at the right end.

    The left end pays a small 0.1 so a myopic learner can settle there.  With
    probability ``slip`` the move is replaced by a uniformly random one.
    """
    steps = np.array([-1, 0, 1, 2])
    S, A = n_states, steps.size
    T = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            for b in range(A):
                p = (1 - slip) * (a == b) + slip / A
                T[s, a, min(max(s + steps[b], 0), S - 1)] += p
    r = np.zeros((S, A))
    r[0] = 0.1
    r[S - 1] = 1.0
    rho0 = np.zeros(S)
    rho0[1] = 1.0
    return TabularMDP(T, r, gamma, rho0, MOVE_COORDS.copy(), 1.0, name="chain")


def gridworld(size: int = 5, slip: float = 0.1, gamma: float = 0.9) -> TabularMDP:
    """Grid with moves up, right, down, left; the far corner is an absorbing goal."""
    moves = [(-1, 0), (0, 1), (1, 0), (0, -1)]
    S, A = size * size, len(moves)
    goal = S - 1
    T = np.zeros((S, A, S))
    for s in range(S):
        row, col = divmod(s, size)
        for a in range(A):
            if s == goal:
                T[s, a, s] = 1.0
                continue
            for b, (dr, dc) in enumerate(moves):
                p = (1 - slip) * (a == b) + slip / A
                nr = min(max(row + dr, 0), size - 1)
                nc = min(max(col + dc, 0), size - 1)
                T[s, a, nr * size + nc] += p
    r = np.zeros((S, A))
    r[goal] = 1.0
    rho0 = np.zeros(S)
    rho0[0] = 1.0
    return TabularMDP(T, r, gamma, rho0, MOVE_COORDS.copy(), 1.0, name="gridworld")


BUILTIN = {"chain": chain, "gridworld": gridworld}


def get_env(name_or_path: str) -> TabularMDP:
    if name_or_path in BUILTIN:
        return BUILTIN[name_or_path]()
    if Path(name_or_path).is_file():
        return load_env(name_or_path)
    raise ParameterError(f"unknown environment {name_or_path!r}")


def dumps_env(mdp: TabularMDP) -> str:
    fmt = lambda v: " ".join(repr(float(x)) for x in v)
    lines = [
        f"n_states {mdp.n_states}",
        f"n_actions {mdp.n_actions}",
        f"gamma {mdp.gamma!r}",
        f"r_max {mdp.r_max!r}",
    ]
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            lines.append(f"T {s} {a} {fmt(mdp.transition[s, a])}")
    for s in range(mdp.n_states):
        lines.append(f"r {s} {fmt(mdp.reward[s])}")
    lines.append(f"rho0 {fmt(mdp.rho0)}")
    lines.append(f"coords {fmt(mdp.action_coords)}")
    return "\n".join(lines) + "\n"


def dump_env(mdp: TabularMDP, path) -> None:
    Path(path).write_text(dumps_env(mdp))


def loads_env(text: str, name: str = "file") -> TabularMDP:
    header = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        key, rest = line[0], line[1:]
        if key in ("n_states", "n_actions", "gamma", "r_max"):
            if len(rest) != 1:
                raise ParameterError(f"line {lineno}: {key} takes one value")
            header[key] = rest[0]
        elif key in ("T", "r", "rho0", "coords"):
            rows.append((lineno, key, rest))
        else:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
    try:
        S, A = int(header["n_states"]), int(header["n_actions"])
        gamma = float(header["gamma"])
    except KeyError as exc:
        raise ParameterError(f"missing header field {exc.args[0]}") from None
    r_max = float(header.get("r_max", 1.0))
    T = np.full((S, A, S), np.nan)
    r = np.full((S, A), np.nan)
    rho0 = coords = None
    for lineno, key, rest in rows:
        try:
            if key == "T":
                s, a = int(rest[0]), int(rest[1])
                T[s, a] = _floats(rest[2:], S, lineno)
            elif key == "r":
                r[int(rest[0])] = _floats(rest[1:], A, lineno)
            elif key == "rho0":
                rho0 = _floats(rest, S, lineno)
            else:
                coords = _floats(rest, A, lineno)
        except (IndexError, ValueError) as exc:
            raise ParameterError(f"line {lineno}: {exc}") from None
    if np.isnan(T).any() or np.isnan(r).any() or rho0 is None or coords is None:
        raise ParameterError("incomplete environment table")
    return TabularMDP(T, r, gamma, rho0, coords, r_max, name=name)


def _floats(tokens, count, lineno):
    if len(tokens) != count:
        raise ParameterError(f"line {lineno}: expected {count} values, got {len(tokens)}")
    return np.array([float(t) for t in tokens])


def load_env(path) -> TabularMDP:
    path = Path(path)
    return loads_env(path.read_text(), name=path.stem)
