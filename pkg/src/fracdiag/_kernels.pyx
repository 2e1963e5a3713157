# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled causal FIR kernel shared by both fractional operators."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def causal_fir(const double[:, ::1] s, const double[::1] h):
    """out[r, n] = sum_{k=0}^{min(n, K-1)} h[k] * s[r, n-k] for every row r."""
    cdef Py_ssize_t rows = s.shape[0]
    cdef Py_ssize_t n_samp = s.shape[1]
    cdef Py_ssize_t K = h.shape[0]
    cdef Py_ssize_t r, n, k, kmax
    cdef double hk
    out = np.zeros((rows, n_samp), dtype=np.float64)
    cdef double[:, ::1] o = out
    kmax = K if K < n_samp else n_samp
    # lag-outer axpy form: the inner loop has no carried dependency, so it
    # vectorises, and each output still accumulates lags in ascending order
    with nogil:
        for r in range(rows):
            for k in range(kmax):
                hk = h[k]
                for n in range(k, n_samp):
                    o[r, n] += hk * s[r, n - k]
    return out
