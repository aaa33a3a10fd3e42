"""Pure numpy implementations of the hot loops.

Signatures mirror ``_kernels.pyx`` exactly; every function mutates or returns
numpy arrays and never allocates Python objects per element.
"""

import numpy as np


def tree_sample(tree, capacity, u):
    """Descend a 1-based sum tree for each target mass in ``u``.

    ``tree[1]`` is the root and leaves occupy ``tree[capacity:2*capacity]``.
    Returns leaf offsets in ``[0, capacity)``.
    """
    u = np.array(u, dtype=np.float64, copy=True)
    node = np.ones(u.shape[0], dtype=np.int64)
    if u.size == 0:
        return node
    while node[0] < capacity:
        left = 2 * node
        left_mass = tree[left]
        right_mass = tree[left + 1]
        go_right = (u >= left_mass) & (right_mass > 0.0)
        u = np.where(go_right, u - left_mass, u)
        node = np.where(go_right, left + 1, left)
    return node - capacity


def band_accumulate(out, n_idx, cutoff, x, upper):
    """``out[n - a + 1] += x_n / a`` for ``cutoff_n < a <= min(upper, n)``."""
    n_idx = np.asarray(n_idx, dtype=np.int64)
    cutoff = np.asarray(cutoff, dtype=np.int64)
    x = np.asarray(x, dtype=np.float64)
    if n_idx.size == 0:
        return
    lo = int(cutoff.min()) + 1
    for a in range(lo, int(upper) + 1):
        mask = (cutoff < a) & (n_idx >= a)
        if not mask.any():
            continue
        # targets n - a + 1 are distinct for a fixed a
        out[n_idx[mask] - a + 1] += x[mask] / a


def staged_accumulate(diff, g, eta_pows, c_min):
    """Difference-array accumulation of staged uniform windows.

    For every buffer size ``n`` in ``1..T`` (``g`` has length ``T + 1`` with
    ``g[0]`` unused) and every stage power ``p`` the window is
    ``c = min(max(floor(n * p), c_min), n)``; insertion steps ``s`` in
    ``[n - c + 1, n]`` receive ``g[n] / c``.
    """
    T = g.shape[0] - 1
    n = np.arange(1, T + 1, dtype=np.int64)
    nf = n.astype(np.float64)
    gn = g[1:]
    size = diff.shape[0]
    for p in eta_pows:
        c = np.minimum(np.maximum(np.floor(nf * p).astype(np.int64), c_min), n)
        val = gn / c
        diff += np.bincount(n - c + 1, weights=val, minlength=size)[:size]
        diff -= np.bincount(n + 1, weights=val, minlength=size)[:size]
