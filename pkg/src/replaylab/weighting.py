"""Sampling-weight formulas for replay buffers.

Ages are 1-based throughout: the newest sample has age 1 and, in a buffer of
``N0`` entries, the oldest has age ``N0``.  All weights are unnormalized; any
comparison between schemes should go through :func:`normalize`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .errors import FormulaDomainError, ParameterError

ArrayLike = Union[int, float, np.ndarray]


class SchemeKind(str, enum.Enum):
    UNIFORM = "uniform"
    ONE_OVER_AGE = "one-over-age"
    ERE_STAGED = "ere-staged"
    ERE_EXACT = "ere-exact"
    ERE_APPROX = "ere-approx"
    PRIORITY = "priority"


_ERE_KINDS = (SchemeKind.ERE_STAGED, SchemeKind.ERE_EXACT, SchemeKind.ERE_APPROX)


@dataclass(frozen=True)
class WeightScheme:
    """A sampling strategy and its parameters.

    ``N0`` is the buffer size the ERE formulas are evaluated at, ``L0`` the
    maximum environment horizon, ``eta`` the decay, ``c_min`` the minimum
    window, and ``K`` the number of updates per episode.  ``alpha`` is only
    used by the priority baseline.
    """

    kind: SchemeKind = SchemeKind.UNIFORM
    N0: int = 1_000_000
    L0: int = 1000
    eta: float = 0.996
    c_min: int = 5000
    K: int = 1000
    alpha: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        self.validate()

    @property
    def is_ere(self) -> bool:
        return self.kind in _ERE_KINDS

    def validate(self) -> None:
        if not self.is_ere:
            if self.kind is SchemeKind.PRIORITY and not self.alpha >= 0:
                raise ParameterError(f"priority exponent must be >= 0, got {self.alpha}")
            return
        for name in ("N0", "L0", "K"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value}")
        if int(self.c_min) != self.c_min or self.c_min < 1:
            raise ParameterError(f"c_min must be a positive integer, got {self.c_min}")
        if not 0.0 < self.eta <= 1.0:
            raise ParameterError(f"eta must lie in (0, 1], got {self.eta}")
        if self.c_min > self.N0:
            raise ParameterError(f"c_min={self.c_min} exceeds N0={self.N0}")
        if self.kind in (SchemeKind.ERE_EXACT, SchemeKind.ERE_APPROX) and self.eta >= 1.0:
            raise ParameterError(
                "closed-form ERE weights are undefined at eta=1; use the uniform scheme"
            )

    def with_size(self, n: int) -> "WeightScheme":
        """Copy of this scheme evaluated at buffer size ``n``."""
        return replace(self, N0=int(n))

    @property
    def recent_floor(self) -> float:
        """``N0 * eta**L0``, the smallest stage window before clamping."""
        return self.N0 * math.exp(self.L0 * math.log(self.eta))


def _check_ages(scheme: WeightScheme, t: ArrayLike) -> np.ndarray:
    ages = np.asarray(t, dtype=np.float64)
    if ages.size and (ages.min() < 1 or ages.max() > scheme.N0):
        raise ParameterError(f"ages must lie in [1, N0={scheme.N0}]")
    return ages


def _maybe_scalar(values: np.ndarray, t: ArrayLike):
    return float(values) if np.ndim(t) == 0 else values


def ere_stage_coverage(k: int, scheme: WeightScheme) -> int:
    """Window size ``c_k`` of the ``k``-th staged update (1-based ``k``)."""
    if not scheme.is_ere:
        raise ParameterError(f"stage coverage needs an ERE scheme, got {scheme.kind.value}")
    if not 1 <= k <= scheme.K:
        raise ParameterError(f"stage index k={k} outside [1, {scheme.K}]")
    c = math.floor(scheme.N0 * scheme.eta ** (k * scheme.L0 / scheme.K))
    return int(min(max(c, scheme.c_min), scheme.N0))


def stage_coverages(scheme: WeightScheme) -> np.ndarray:
    """All ``K`` stage windows as an integer array."""
    return np.array([ere_stage_coverage(k, scheme) for k in range(1, scheme.K + 1)], dtype=np.int64)


def ere_aggregate_oracle(scheme: WeightScheme, t: ArrayLike):
    """Direct sum of ``1/c_k`` over the stages whose window covers age ``t``."""
    ages = _check_ages(scheme, t)
    c = np.sort(stage_coverages(scheme))
    inv = 1.0 / c.astype(np.float64)
    # tail[j] = sum of 1/c over the j-th smallest window onwards
    tail = np.concatenate([np.cumsum(inv[::-1])[::-1], [0.0]])
    idx = np.searchsorted(c, np.ceil(ages), side="left")
    return _maybe_scalar(tail[idx], t)


def _ere_first_term(scheme: WeightScheme, ages: np.ndarray) -> np.ndarray:
    first = 1.0 / np.maximum(np.maximum(ages, scheme.c_min), scheme.recent_floor) - 1.0 / scheme.N0
    if np.any(first < 0):
        raise FormulaDomainError(
            "negative recency term; the closed form requires max(t, c_min, N0*eta^L0) <= N0"
        )
    return first


def ere_exact_weight(scheme: WeightScheme, t: ArrayLike):
    """Closed-form aggregate weight of the staged ERE sampler."""
    if scheme.eta >= 1.0:
        raise ParameterError("ere_exact_weight is undefined at eta=1")
    ages = _check_ages(scheme, t)
    log_eta = math.log(scheme.eta)
    scale = -1.0 / math.expm1(scheme.L0 / scheme.K * log_eta)  # 1/(1 - eta^(L0/K))
    clamped_frac = max(1.0 - math.log(scheme.c_min / scheme.N0) / (scheme.L0 * log_eta), 0.0)
    recent = np.where(ages <= scheme.c_min, scheme.K / scheme.c_min * clamped_frac, 0.0)
    return _maybe_scalar(scale * _ere_first_term(scheme, ages) + recent, t)


def ere_apx_weight(scheme: WeightScheme, t: ArrayLike):
    """Taylor-approximated ERE weight, a shifted 1/age profile with a recent bonus."""
    if scheme.eta >= 1.0:
        raise ParameterError("ere_apx_weight is undefined at eta=1")
    ages = _check_ages(scheme, t)
    log_ratio = math.log(scheme.c_min) - math.log(scheme.N0) - scheme.L0 * math.log(scheme.eta)
    bonus = max(log_ratio, 0.0) / scheme.c_min
    recent = np.where(ages <= scheme.c_min, bonus, 0.0)
    return _maybe_scalar(_ere_first_term(scheme, ages) + recent, t)


def scheme_weight(scheme: WeightScheme, t: ArrayLike, priority: Optional[ArrayLike] = None):
    """Unnormalized weight of a sample of age ``t`` under ``scheme``."""
    kind = scheme.kind
    if kind is SchemeKind.PRIORITY:
        if priority is None:
            raise ParameterError("the priority baseline needs a priority per sample")
        p = np.asarray(priority, dtype=np.float64)
        if np.any(p < 0):
            raise ParameterError("priorities must be non-negative")
        return _maybe_scalar(p ** scheme.alpha, priority)
    ages = np.asarray(t, dtype=np.float64)
    if ages.size and ages.min() < 1:
        raise ParameterError("ages are 1-based")
    if kind is SchemeKind.UNIFORM:
        return _maybe_scalar(np.ones_like(ages), t)
    if kind is SchemeKind.ONE_OVER_AGE:
        return _maybe_scalar(1.0 / ages, t)
    if kind is SchemeKind.ERE_STAGED:
        return ere_aggregate_oracle(scheme, t)
    if kind is SchemeKind.ERE_EXACT:
        return ere_exact_weight(scheme, t)
    return ere_apx_weight(scheme, t)


def age_weights(scheme: WeightScheme, n: int) -> np.ndarray:
    """Weights for ages ``1..n`` in a buffer currently holding ``n`` entries.

    ERE schemes are evaluated with ``N0`` equal to the current size.  While the
    buffer holds no more than ``c_min`` entries every stage window spans the
    whole buffer, so the weights are uniform.
    """
    if n < 1:
        raise ParameterError("buffer size must be positive")
    ages = np.arange(1, n + 1, dtype=np.float64)
    if scheme.is_ere:
        if n <= scheme.c_min:
            return np.ones(n)
        return np.asarray(scheme_weight(scheme.with_size(n), ages), dtype=np.float64)
    return np.asarray(scheme_weight(scheme, ages), dtype=np.float64)


def normalize(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ParameterError("weights must be finite, non-negative and non-empty")
    total = w.sum()
    if total <= 0:
        raise ParameterError("weights sum to zero")
    return w / total
