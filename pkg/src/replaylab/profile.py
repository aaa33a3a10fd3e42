"""Expected selection counts of every stored transition over a training run.

The buffer starts empty and grows by one transition per environment step.  At
step ``n`` the learner draws ``updates * batch`` samples with probability
proportional to the scheme's age weights over the ``n`` stored entries.  The
expected number of times the transition inserted at step ``s`` is drawn is

    count[s] = updates * batch * sum_{n=s..T} w_n(n - s + 1) / Z_n

where ``Z_n`` is the total weight at step ``n``.  A direct evaluation costs
O(T^2).  Every scheme here splits ``w_n`` into a few age intervals with a
constant value (accumulated through a difference array in O(1) per step) plus
a ``coef_n / age`` tail beyond a cutoff ``m_n``.  The tail is a correlation
with a fixed ``1/age`` kernel, evaluated by FFT over blocks of steps whose
cutoffs differ by at most ``band`` and patched up exactly inside that band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from . import kernels
from .errors import ParameterError
from .weighting import SchemeKind, WeightScheme

DEFAULT_BAND = 1024


@dataclass
class SelectionProfile:
    scheme: WeightScheme
    horizon: int
    batch: int
    updates: int
    expected_count: np.ndarray

    @property
    def time_step(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    def coefficient_of_variation(self, lo: int, hi: int) -> float:
        """Std/mean of the counts for insertion steps ``lo..hi`` inclusive."""
        seg = self.expected_count[lo - 1 : hi]
        return float(seg.std() / seg.mean())


def _harmonic(T: int) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, T + 1, dtype=np.float64))])


def _add_segments(diff, n, lo, hi, val):
    keep = hi >= lo
    if not np.any(keep):
        return
    n, lo, hi, val = n[keep], lo[keep], hi[keep], val[keep]
    size = diff.shape[0]
    diff += np.bincount(n - hi + 1, weights=val, minlength=size)[:size]
    diff -= np.bincount(n - lo + 2, weights=val, minlength=size)[:size]


def _add_tail(out, n, cutoff, x, band):
    """``out[s] += x_n / (n - s + 1)`` whenever ``n - s + 1 > cutoff_n``."""
    keep = (cutoff < n) & (x != 0)
    n, cutoff, x = n[keep], cutoff[keep], x[keep]
    if n.size == 0:
        return
    if np.any(np.diff(cutoff) < 0):
        raise ValueError("tail cutoffs must be non-decreasing in the step index")
    start = 0
    while start < n.size:
        stop = int(np.searchsorted(cutoff, cutoff[start] + band, side="right"))
        bn, bc, bx = n[start:stop], cutoff[start:stop], x[start:stop]
        lo, hi, top = int(bn[0]), int(bn[-1]), int(bc[-1])
        # ages above the largest cutoff in the block: one fixed kernel
        if hi > top:
            dense = np.zeros(hi - lo + 1)
            dense[bn - lo] = bx
            reversed_kernel = 1.0 / np.arange(hi, top, -1, dtype=np.float64)
            conv = fftconvolve(dense, reversed_kernel)
            s = np.arange(conv.size) - hi + lo + 1
            valid = (s >= 1) & (s <= out.shape[0] - 1)
            out[s[valid]] += conv[valid]
        if top > int(bc[0]):
            kernels.band_accumulate(
                out,
                np.ascontiguousarray(bn, dtype=np.int64),
                np.ascontiguousarray(bc, dtype=np.int64),
                np.ascontiguousarray(bx, dtype=np.float64),
                top,
            )
        start = stop


def _ere_decomposition(scheme: WeightScheme, n: np.ndarray, H: np.ndarray):
    """Normalizers, constant segments and tail terms for the closed-form ERE."""
    c = scheme.c_min
    log_eta = math.log(scheme.eta)
    big = n > c
    nb = n[big].astype(np.float64)
    floor_real = nb * math.exp(scheme.L0 * log_eta)
    m_real = np.maximum(c, floor_real)
    m_int = np.minimum(np.floor(m_real).astype(np.int64), n[big])
    if scheme.kind is SchemeKind.ERE_EXACT:
        scale = -1.0 / math.expm1(scheme.L0 / scheme.K * log_eta)
        bonus = scheme.K / c * np.maximum(1.0 - np.log(c / nb) / (scheme.L0 * log_eta), 0.0)
    else:
        scale = 1.0
        bonus = np.maximum(math.log(c) - np.log(nb) - scheme.L0 * log_eta, 0.0) / c
    Z = n.astype(np.float64).copy()
    Z[big] = scale * (m_int / m_real + H[n[big]] - H[m_int] - 1.0) + c * bonus
    ones = np.ones(n.size, dtype=np.int64)
    small = ~big
    segments = [
        (n[small], ones[small], n[small], np.ones(small.sum())),
        (n[big], ones[big], m_int, scale / m_real),
        (n[big], ones[big], n[big], -scale / nb),
        (n[big], ones[big], np.full(big.sum(), c, dtype=np.int64), bonus),
    ]
    tail = (n[big], m_int, np.full(big.sum(), scale))
    return Z, segments, tail


def expected_selection_profile(
    scheme: WeightScheme,
    horizon: int,
    batch: int = 1,
    updates_per_step: int = 1,
    band: int = DEFAULT_BAND,
) -> SelectionProfile:
    """Exact expected selection count for every insertion step ``1..horizon``.

    ERE schemes use the current buffer size as ``N0`` at every step.
    """
    T = int(horizon)
    if T < 1 or batch < 1 or updates_per_step < 1:
        raise ParameterError("horizon, batch and updates_per_step must be positive")
    if scheme.kind is SchemeKind.PRIORITY:
        raise ParameterError("the priority baseline has no age profile")
    draws = float(batch * updates_per_step)
    n = np.arange(1, T + 1, dtype=np.int64)
    diff = np.zeros(T + 2)
    out = np.zeros(T + 1)  # index 0 unused
    kind = scheme.kind

    if kind is SchemeKind.UNIFORM:
        g = draws / n
        # every entry gets g[n] at step n: suffix sums
        out[1:] = np.cumsum(g[::-1])[::-1]
    elif kind is SchemeKind.ONE_OVER_AGE:
        H = _harmonic(T)
        g = draws / H[1:]
        _add_tail(out, n, np.zeros(T, dtype=np.int64), g, band)
    elif kind is SchemeKind.ERE_STAGED:
        g = np.concatenate([[0.0], draws / scheme.K * np.ones(T)])
        eta_pows = np.array(
            [scheme.eta ** (k * scheme.L0 / scheme.K) for k in range(1, scheme.K + 1)]
        )
        kernels.staged_accumulate(diff, g, eta_pows, int(scheme.c_min))
    else:
        H = _harmonic(T)
        Z, segments, (tn, tcut, tcoef) = _ere_decomposition(scheme, n, H)
        g = draws / Z
        for sn, lo, hi, val in segments:
            _add_segments(diff, sn, lo, hi, g[sn - 1] * val)
        _add_tail(out, tn, tcut, tcoef * g[tn - 1], band)

    out[1:] += np.cumsum(diff)[1 : T + 1]
    return SelectionProfile(scheme, T, int(batch), int(updates_per_step), out[1:].copy())


def monte_carlo_selection(
    scheme: WeightScheme,
    horizon: int,
    batch: int = 1,
    updates_per_step: int = 1,
    runs: int = 20,
    seed=0,
):
    """Simulated selection counts through a real replay buffer.

    Returns per-step mean counts over ``runs`` independent runs and their
    standard errors.
    """
    from .replay import ReplayBuffer, Transition
    from .weighting import age_weights

    if runs < 2:
        raise ParameterError("need at least two runs for a standard error")
    if scheme.kind is SchemeKind.PRIORITY:
        raise ParameterError("the priority baseline has no age profile")
    T = int(horizon)
    draws = int(batch * updates_per_step)
    rng = np.random.default_rng(seed)
    counts = np.zeros((runs, T))
    weights = [age_weights(scheme, n)[::-1].copy() for n in range(1, T + 1)]
    for r in range(runs):
        buf = ReplayBuffer()
        for n in range(1, T + 1):
            buf.push(Transition(0, 0, 0.0, 0, 0, n - 1, n))
            buf.set_weights(weights[n - 1])
            counts[r, :n] += np.bincount(buf.sample_batch(draws, rng), minlength=n)
    return counts.mean(axis=0), counts.std(axis=0, ddof=1) / math.sqrt(runs)
