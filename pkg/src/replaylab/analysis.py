"""Concentration widths of weighted sums and policy-evaluation error bounds.

All logarithms are natural.  The bounds are the explicit, non-asymptotic
right-hand sides; each splits into an initial-state variance term, a middle
term (sampling variance plus truncation), and the Bellman/mismatch bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError


def _positive_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size == 0:
        raise ParameterError("need at least one weight")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ParameterError("weights must be finite and strictly positive")
    return w


def hoeffding_error(weights) -> float:
    """``sqrt(sum w^2) / sum w``; equals ``1/sqrt(N)`` for equal weights."""
    w = _positive_weights(weights)
    # rescale first so large or tiny weights cannot overflow the squares
    w = w / w.max()
    return float(math.sqrt(np.dot(w, w)) / w.sum())


def azuma_weighted_error(weights, value_range: float, delta: float) -> float:
    """High-probability deviation of a weighted mean of martingale differences.

    Each term ranges over ``2 * value_range``, so the width is
    ``sqrt(sum (2 value_range w)^2 / 2 * ln(1/delta)) / sum w``.
    """
    if not value_range > 0:
        raise ParameterError("value range must be positive")
    if not 0 < delta <= 1:
        raise ParameterError("delta must lie in (0, 1]")
    h = hoeffding_error(weights)
    return float(2.0 * value_range * h * math.sqrt(0.5 * math.log(1.0 / delta)))


@dataclass(frozen=True)
class BoundInputs:
    r_max: float
    gamma: float
    lipschitz: float
    diam_A: float
    delta: float
    episodes: int
    step: int = 0
    horizon: float = math.inf
    bellman_err: float = 0.0
    w1_err: float = 0.0
    episode_weights: Optional[Sequence[float]] = field(default=None, compare=False)

    def __post_init__(self):
        finite = ("r_max", "gamma", "lipschitz", "diam_A", "delta", "bellman_err", "w1_err")
        for name in finite:
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")
        if not self.r_max > 0:
            raise ParameterError("r_max must be positive")
        if not 0 < self.gamma < 1:
            raise ParameterError("gamma must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")
        if self.lipschitz < 0 or self.diam_A < 0:
            raise ParameterError("lipschitz and diam_A must be non-negative")
        if self.bellman_err < 0 or self.w1_err < 0:
            raise ParameterError("error terms must be non-negative")
        if self.episodes < 1:
            raise ParameterError("need at least one episode")
        if self.step < 0:
            raise ParameterError("step must be non-negative")
        if self.horizon != math.inf and not self.step < self.horizon:
            raise ParameterError("step must be smaller than a finite horizon")
        if self.episode_weights is not None:
            w = _positive_weights(self.episode_weights)
            object.__setattr__(self, "episode_weights", tuple(float(x) for x in w))

    def with_errors(self, bellman_err: float, w1_err: float) -> "BoundInputs":
        return replace(self, bellman_err=bellman_err, w1_err=w1_err)


@dataclass(frozen=True)
class BoundTerms:
    variance_initial: float
    variance_middle: float
    truncation: float
    bellman: float
    mismatch: float

    @property
    def total(self) -> float:
        return (
            self.variance_initial
            + self.variance_middle
            + self.truncation
            + self.bellman
            + self.mismatch
        )

    def items(self):
        yield from (
            ("variance_initial", self.variance_initial),
            ("variance_middle", self.variance_middle),
            ("truncation", self.truncation),
            ("bellman", self.bellman),
            ("mismatch", self.mismatch),
            ("total", self.total),
        )


def _truncation_factor(inputs: BoundInputs) -> float:
    if inputs.horizon == math.inf:
        return 0.0
    return inputs.gamma ** (inputs.horizon - inputs.step)


def bound_terms(inputs: BoundInputs, concentration: float) -> BoundTerms:
    """Terms of the bound for a given effective ``1/sqrt(N)``-like factor.

    ``concentration`` is ``sqrt(sum w^2) / sum w`` (``1/sqrt(N)`` unweighted).
    """
    g = inputs.gamma
    log_term = math.log(2.0 / inputs.delta)
    middle_coef = inputs.r_max / (1 - g) ** 2 + 2 * inputs.lipschitz * inputs.diam_A / (1 - g)
    return BoundTerms(
        variance_initial=inputs.r_max / (1 - g) * concentration * math.sqrt(log_term / 2.0),
        variance_middle=middle_coef * concentration * math.sqrt(2.0 * log_term),
        truncation=middle_coef * _truncation_factor(inputs),
        bellman=inputs.bellman_err / (1 - g),
        mismatch=2 * inputs.lipschitz * inputs.w1_err / (1 - g),
    )


def theorem1_rhs(inputs: BoundInputs) -> float:
    """Bound at step 0 with infinite-length trajectories and equal episode weights."""
    if inputs.step != 0 or inputs.horizon != math.inf or inputs.episode_weights is not None:
        raise ParameterError("theorem1_rhs needs step=0, horizon=inf and no episode weights")
    return bound_terms(inputs, 1.0 / math.sqrt(inputs.episodes)).total


def corollary1_terms(inputs: BoundInputs) -> BoundTerms:
    return bound_terms(inputs, 1.0 / math.sqrt(inputs.episodes))


def corollary1_rhs(inputs: BoundInputs) -> float:
    """Bound at step ``i`` with length-``L`` trajectories; errors measured at (i, L)."""
    return corollary1_terms(inputs).total


def corollary2_terms(inputs: BoundInputs) -> BoundTerms:
    if inputs.episode_weights is None:
        raise ParameterError("corollary2 needs episode weights")
    if len(inputs.episode_weights) != inputs.episodes:
        raise ParameterError("need one weight per episode")
    return bound_terms(inputs, hoeffding_error(inputs.episode_weights))


def corollary2_weighted_rhs(inputs: BoundInputs) -> float:
    """Weighted-episode bound: ``1/N`` replaced by ``sum w^2 / (sum w)^2``."""
    return corollary2_terms(inputs).total
