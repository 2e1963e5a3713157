"""Pure-numpy fallback for :mod:`fracdiag._kernels`."""

import numpy as np


def causal_fir(s, h):
    """out[r, n] = sum_{k=0}^{min(n, K-1)} h[k] * s[r, n-k] for every row r.

    Built as a lower-triangular banded Toeplitz matrix so the whole batch is one
    matmul.
    """
    s = np.ascontiguousarray(s, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    n = s.shape[1]
    K = min(h.shape[0], n)
    lag = np.arange(n)[:, None] - np.arange(n)[None, :]
    T = np.zeros((n, n))
    band = (lag >= 0) & (lag < K)
    T[band] = h[lag[band]]
    return s @ T.T
