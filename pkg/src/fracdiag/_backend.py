"""Picks the compiled kernel when it is importable.

Set ``FRACDIAG_PURE_PYTHON=1`` to force the numpy fallback. With the
extension present, wide batches still go through the numpy Toeplitz product:
past about a hundred rows a BLAS matrix product beats the compiled loop (see
``benchmarks/bench_kernels.py``).
"""

import os

from . import _kernels_py

BACKEND = "python"
BLAS_MIN_ROWS = 128
causal_fir = _kernels_py.causal_fir

if not os.environ.get("FRACDIAG_PURE_PYTHON"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"

        def causal_fir(s, h):
            if len(s) >= BLAS_MIN_ROWS:
                return _kernels_py.causal_fir(s, h)
            return _kernels.causal_fir(s, h)


__all__ = ["BACKEND", "BLAS_MIN_ROWS", "causal_fir"]
