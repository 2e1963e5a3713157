"""Feed-forward classifiers with hand-written backprop, and the two-level model.

Networks are tanh MLPs with a softmax head. ``backward`` returns gradients for
every parameter and for the input; PGD needs the latter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .fracfeat import FracConfig, Normalizer
from .signalgen import N_INVERTERS, N_SWITCHES, HierLabel

PROB_FLOOR = 1e-12
MODEL_FORMAT = "fracdiag-hiermodel/1"

STAGE1_SIZES = (36, 64, 32, 5)
STAGE2_SIZES = (36, 32, 6)


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)

    def copy(self) -> MlpParams:
        return MlpParams([W.copy() for W in self.weights], [b.copy() for b in self.biases], self.seed)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "seed": int(self.seed),
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> MlpParams:
        p = cls(
            [np.array(W, dtype=np.float64) for W in d["weights"]],
            [np.array(b, dtype=np.float64) for b in d["biases"]],
            int(d.get("seed", 0)),
        )
        _check_shapes(p)
        return p


def _check_shapes(p: MlpParams):
    if len(p.weights) != len(p.biases) or len(p.weights) < 2:
        raise ValueError("an MLP needs at least one hidden layer")
    for i, (W, b) in enumerate(zip(p.weights, p.biases)):
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError(f"layer {i}: bias shape {b.shape} does not match weight {W.shape}")
        if i and W.shape[1] != p.weights[i - 1].shape[0]:
            raise ValueError(f"layer {i}: input width {W.shape[1]} != previous output")


def init_params(sizes, seed: int) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 3:
        raise ValueError("need at least one hidden layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, int(seed))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_trace(p: MlpParams, X):
    acts = [X]
    h = X
    last = len(p.weights) - 1
    for i, (W, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ W.T + b
        h = z if i == last else np.tanh(z)
        acts.append(h)
    return acts, softmax(h)


def _as_batch(p: MlpParams, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != p.weights[0].shape[1]:
        raise ValueError(f"input width {X.shape[1]} != network input {p.weights[0].shape[1]}")
    return X, single


def logits(p: MlpParams, x):
    X, single = _as_batch(p, x)
    z = _forward_trace(p, X)[0][-1]
    return z[0] if single else z


def forward(p: MlpParams, x):
    """Class probabilities for one vector or a batch of rows."""
    X, single = _as_batch(p, x)
    probs = _forward_trace(p, X)[1]
    return probs[0] if single else probs


def loss_ce(probs, y):
    """Cross-entropy; ``probs`` may be one distribution or a batch (then ``y`` is an array)."""
    probs = np.asarray(probs, dtype=np.float64)
    K = probs.shape[-1]
    y = np.asarray(y)
    if np.any(y < 0) or np.any(y >= K):
        raise ValueError(f"class index out of range for {K} classes")
    if probs.ndim == 1:
        return float(-np.log(max(probs[int(y)], PROB_FLOOR)))
    picked = probs[np.arange(len(y)), y]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def per_sample_loss(p: MlpParams, X, y) -> np.ndarray:
    return loss_ce(forward(p, np.atleast_2d(X)), np.asarray(y))


def backward(p: MlpParams, x, y, sample_weights=None):
    """Gradients of the (weighted) cross-entropy.

    For a single vector the loss is that sample's CE. For a batch it is
    ``sum_i w_i * CE_i`` with ``w_i = 1/B`` unless ``sample_weights`` is given.
    Returns ``(grads, dx)`` where ``grads`` mirrors ``p`` and ``dx`` has the
    shape of ``x`` (per-sample input gradients of the weighted loss).
    """
    X, single = _as_batch(p, x)
    y = np.atleast_1d(np.asarray(y))
    B = X.shape[0]
    if sample_weights is None:
        sw = np.full(B, 1.0 / B)
    else:
        sw = np.asarray(sample_weights, dtype=np.float64).reshape(B)
    acts, probs = _forward_trace(p, X)
    K = probs.shape[1]
    if np.any(y < 0) or np.any(y >= K):
        raise ValueError(f"class index out of range for {K} classes")
    delta = probs.copy()
    delta[np.arange(B), y] -= 1.0
    delta *= sw[:, None]
    n_layers = len(p.weights)
    gW = [None] * n_layers
    gb = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        gW[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        delta = delta @ p.weights[i]
        if i > 0:
            delta = delta * (1.0 - acts[i] ** 2)
    if not (np.all(np.isfinite(delta)) and all(np.all(np.isfinite(g)) for g in gW)):
        raise FloatingPointError("non-finite value in backward pass")
    grads = MlpParams(gW, gb, p.seed)
    return grads, (delta[0] if single else delta)


def input_gradient(p: MlpParams, X, y) -> np.ndarray:
    """Per-sample d CE_i / d x_i for a batch (unweighted)."""
    X = np.atleast_2d(X)
    return backward(p, X, y, np.ones(X.shape[0]))[1]


def sgd_step(p: MlpParams, grads: MlpParams, lr: float, momentum: float = 0.0, velocity=None):
    """Classic momentum SGD: ``v <- momentum*v + g``; ``p <- p - lr*v``.

    Returns ``(new_params, new_velocity)``; pass the velocity back on the next call.
    """
    if lr < 0:
        raise ValueError("lr must be non-negative")
    g = grads.arrays()
    if velocity is None:
        velocity = [np.zeros_like(a) for a in g]
    velocity = [momentum * v + gi for v, gi in zip(velocity, g)]
    new = [a - lr * v for a, v in zip(p.arrays(), velocity)]
    return MlpParams(new[0::2], new[1::2], p.seed), velocity


@dataclass
class HierModel:
    """Stage-1 inverter localiser plus one switch classifier per inverter."""

    stage1: MlpParams
    stage2: list[MlpParams]
    normalizer: Normalizer
    frac: FracConfig = field(default_factory=FracConfig)
    warmup: int = 100
    raw_features: bool = False
    meta: dict = field(default_factory=dict)
    stage2_calls: int = field(default=0, compare=False)

    def __post_init__(self):
        if len(self.stage2) != N_INVERTERS:
            raise ValueError(f"need {N_INVERTERS} stage-2 networks")
        d = self.stage1.sizes[0]
        if any(s.sizes[0] != d for s in self.stage2):
            raise ValueError("all networks must share the input dimension")
        if self.stage1.sizes[-1] != N_INVERTERS + 1 or any(s.sizes[-1] != N_SWITCHES for s in self.stage2):
            raise ValueError("stage-1 must have 5 outputs and stage-2 networks 6")

    @property
    def input_dim(self) -> int:
        return self.stage1.sizes[0]

    def predict_stage1(self, Z) -> np.ndarray:
        return np.argmax(logits(self.stage1, np.atleast_2d(Z)), axis=1)

    def predict_batch(self, Z) -> tuple[np.ndarray, np.ndarray]:
        """Normalised features -> (flat labels, stage-1 predictions)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        s1 = self.predict_stage1(Z)
        flat = np.zeros(len(Z), dtype=np.int64)
        for inv in range(1, N_INVERTERS + 1):
            rows = np.flatnonzero(s1 == inv)
            if rows.size == 0:
                continue
            self.stage2_calls += rows.size
            sw = np.argmax(logits(self.stage2[inv - 1], Z[rows]), axis=1)
            flat[rows] = 1 + N_SWITCHES * (inv - 1) + sw
        return flat, s1

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "frac": {
                "alpha": self.frac.alpha,
                "beta": self.frac.beta,
                "memory_len": self.frac.memory_len,
                "dt": self.frac.dt,
            },
            "warmup": self.warmup,
            "raw_features": self.raw_features,
            "normalizer": self.normalizer.to_dict(),
            "stage1": self.stage1.to_dict(),
            "stage2": [s.to_dict() for s in self.stage2],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> HierModel:
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        return cls(
            MlpParams.from_dict(d["stage1"]),
            [MlpParams.from_dict(s) for s in d["stage2"]],
            Normalizer.from_dict(d["normalizer"]),
            FracConfig(**d["frac"]),
            int(d["warmup"]),
            bool(d["raw_features"]),
            dict(d.get("meta", {})),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> HierModel:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def predict_hier(m: HierModel, x) -> HierLabel:
    """Label for one normalised feature vector; stage 2 runs only on a fault."""
    return HierLabel.from_flat(int(m.predict_batch(np.asarray(x)[None])[0][0]))
