# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Same signatures and semantics as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def tree_sample(const double[::1] tree, Py_ssize_t capacity, const double[::1] u):
    cdef Py_ssize_t m = u.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(m, dtype=np.int64)
    cdef Py_ssize_t i, node, left
    cdef double mass
    for i in range(m):
        mass = u[i]
        node = 1
        while node < capacity:
            left = 2 * node
            if mass >= tree[left] and tree[left + 1] > 0.0:
                mass -= tree[left]
                node = left + 1
            else:
                node = left
        out[i] = node - capacity
    return out


def band_accumulate(double[::1] out, const cnp.int64_t[::1] n_idx,
                    const cnp.int64_t[::1] cutoff, const double[::1] x,
                    Py_ssize_t upper):
    cdef Py_ssize_t i, a, n, stop
    for i in range(n_idx.shape[0]):
        n = n_idx[i]
        stop = upper if upper < n else n
        for a in range(cutoff[i] + 1, stop + 1):
            out[n - a + 1] += x[i] / a


def staged_accumulate(double[::1] diff, const double[::1] g,
                      const double[::1] eta_pows, Py_ssize_t c_min):
    cdef Py_ssize_t T = g.shape[0] - 1
    cdef Py_ssize_t K = eta_pows.shape[0]
    cdef Py_ssize_t n, k, c
    cdef double val
    for n in range(1, T + 1):
        for k in range(K):
            c = <Py_ssize_t> floor(n * eta_pows[k])
            if c < c_min:
                c = c_min
            if c > n:
                c = n
            val = g[n] / c
            diff[n - c + 1] += val
            diff[n + 1] -= val
