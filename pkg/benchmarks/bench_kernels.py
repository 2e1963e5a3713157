"""Time the compiled causal FIR kernel against the numpy fallback.

``dispatch`` is what the package uses: compiled below ``BLAS_MIN_ROWS`` rows, numpy above.

    python3 benchmarks/bench_kernels.py [--rows 600] [--length 400] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from fracdiag import _backend, _kernels_py
from fracdiag.fracfeat import FracConfig, gl_weights


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=600, help="series per call (windows x channels)")
    ap.add_argument("--length", type=int, default=400)
    ap.add_argument("--memory", type=int, default=FracConfig().memory_len)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    s = rng.normal(size=(args.rows, args.length))
    h = gl_weights(0.3, args.memory)
    impls = {"numpy": _kernels_py.causal_fir}
    if _backend.BACKEND == "cython":
        from fracdiag import _kernels

        impls["cython"] = _kernels.causal_fir
        impls["dispatch"] = _backend.causal_fir
    else:
        print("compiled extension not available; timing the fallback only")

    ref = _kernels_py.causal_fir(s, h)
    print(f"rows={args.rows} length={args.length} memory={args.memory}")
    for name, fn in impls.items():
        err = np.max(np.abs(fn(s, h) - ref))
        best = min(timeit.repeat(lambda: fn(s, h), number=1, repeat=args.repeat))
        print(f"{name:8s} {best * 1e3:9.2f} ms/call  max|diff|={err:.1e}")


if __name__ == "__main__":
    main()
