"""Central finite-difference oracle shared by the model tests and the acceptance gate."""

import numpy as np

from fracdiag import model as mlp

STEP = 1e-5
# relative errors use max(|analytic|, |numeric|, FLOOR) so coordinates whose
# true gradient is ~0 are judged on an absolute scale instead of dividing by 0
FLOOR = 1e-6


def rel_err(a, n) -> float:
    a, n = np.asarray(a), np.asarray(n)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), FLOOR)))


def _loss(p, x, y) -> float:
    return mlp.loss_ce(mlp.forward(p, x), y)


def numeric_param_grads(p: mlp.MlpParams, x, y, h=STEP) -> list[np.ndarray]:
    out = []
    for arr in p.arrays():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            keep = arr[i]
            arr[i] = keep + h
            up = _loss(p, x, y)
            arr[i] = keep - h
            down = _loss(p, x, y)
            arr[i] = keep
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def numeric_input_grad(p: mlp.MlpParams, x, y, h=STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (_loss(p, x + e, y) - _loss(p, x - e, y)) / (2 * h)
    return g


def worst_errors(p: mlp.MlpParams, x, y) -> tuple[float, float]:
    """(max relative error over parameters, over the input) at one point."""
    grads, dx = mlp.backward(p, x, y)
    num = numeric_param_grads(p, x, y)
    param = max(rel_err(a, n) for a, n in zip(grads.arrays(), num))
    return param, rel_err(dx, numeric_input_grad(p, x, y))
