"""Dual fractional-order feature extraction.

Two discretised operators act on every (V, P, Q) channel:

* Caputo derivative of order ``alpha`` via the L1 scheme. It annihilates
  constants, so it only responds to changes (fast transients, ripple).
* Grünwald-Letnikov derivative of order ``beta`` via the truncated binomial
  series. It keeps a ``t**-beta`` response to level, so slow drifts and DC
  offsets stay visible.

Both are short-memory: the history is cut to the last ``memory_len`` samples.
The six resulting channels are reduced to six statistics each.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .signalgen import Window

CHANNEL_NAMES = ("caputo_v", "caputo_p", "caputo_q", "gl_v", "gl_p", "gl_q")
RAW_CHANNEL_NAMES = ("raw_v", "raw_p", "raw_q")
STAT_NAMES = ("mean", "std", "min", "max", "rms", "masd")
N_FEATURES = len(CHANNEL_NAMES) * len(STAT_NAMES)
DEFAULT_WARMUP = 100

# Lanczos approximation, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x: float) -> float:
    """Gamma function for positive real ``x``."""
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ValueError(f"gamma_fn is defined here for finite x > 0, got {x}")
    if x < 0.5:
        # reflection keeps the series in its accurate range
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    x -= 1.0
    a = _LANCZOS_COEF[0]
    t = x + _LANCZOS_G + 0.5
    for i in range(1, len(_LANCZOS_COEF)):
        a += _LANCZOS_COEF[i] / (x + i)
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * a


@dataclass(frozen=True)
class FracConfig:
    alpha: float = 0.7
    beta: float = 0.3
    memory_len: int = 400
    dt: float = 5e-4

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.memory_len < 2:
            raise ValueError("memory_len must be >= 2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def gl_weights(beta: float, L: int) -> np.ndarray:
    """Signed binomial coefficients ``(-1)**k * C(beta, k)`` for k < L."""
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    w = np.empty(L)
    w[0] = 1.0
    for k in range(1, L):
        w[k] = w[k - 1] * (1.0 - (beta + 1.0) / k)
    return w


def l1_weights(alpha: float, m: int) -> np.ndarray:
    """L1 scheme coefficients ``(j+1)**(1-alpha) - j**(1-alpha)`` for j < m."""
    j = np.arange(m, dtype=np.float64)
    return (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)


def _as_rows(series) -> tuple[np.ndarray, bool]:
    x = np.asarray(series, dtype=np.float64)
    single = x.ndim == 1
    return np.ascontiguousarray(np.atleast_2d(x)), single


def gl_derivative(series, cfg: FracConfig) -> np.ndarray:
    """Short-memory Grünwald-Letnikov derivative of order ``cfg.beta``.

    Accepts one series or a 2-D array of series (one per row).
    """
    x, single = _as_rows(series)
    if x.shape[-1] < 1:
        raise ValueError("gl_derivative needs a non-empty series")
    w = gl_weights(cfg.beta, cfg.memory_len)
    out = _backend.causal_fir(x, w) * cfg.dt ** (-cfg.beta)
    return out[0] if single else out


def caputo_derivative(series, cfg: FracConfig) -> np.ndarray:
    """Short-memory Caputo derivative of order ``cfg.alpha`` (L1 scheme).

    ``out[0]`` is 0; for n >= 1 the sum runs over the last
    ``min(n, memory_len - 1)`` increments.
    """
    x, single = _as_rows(series)
    if x.shape[-1] < 2:
        raise ValueError("caputo_derivative needs at least 2 samples")
    d = np.zeros_like(x)
    d[:, 1:] = np.diff(x, axis=1)
    b = l1_weights(cfg.alpha, cfg.memory_len - 1)
    scale = cfg.dt ** (-cfg.alpha) / gamma_fn(2.0 - cfg.alpha)
    out = _backend.causal_fir(d, b) * scale
    return out[0] if single else out


@dataclass
class FeatureChannels:
    """The six operator outputs, rows ordered as ``CHANNEL_NAMES``."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.shape[0] != len(CHANNEL_NAMES):
            raise ValueError("expected six feature channels")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[CHANNEL_NAMES.index(name)]


def channels_batch(stack: np.ndarray, cfg: FracConfig) -> np.ndarray:
    """(n, 3, T) raw windows -> (n, 6, T) feature channels."""
    stack = np.asarray(stack, dtype=np.float64)
    n, c, T = stack.shape
    rows = stack.reshape(n * c, T)
    cap = caputo_derivative(rows, cfg).reshape(n, c, T)
    gl = gl_derivative(rows, cfg).reshape(n, c, T)
    return np.concatenate([cap, gl], axis=1)


def build_feature_channels(w: Window, cfg: FracConfig) -> FeatureChannels:
    return FeatureChannels(channels_batch(w.data[None], cfg)[0])


def summary_stats(x: np.ndarray, warmup: int = DEFAULT_WARMUP) -> np.ndarray:
    """Six statistics along the last axis after dropping ``warmup`` samples.

    ``x`` has shape (..., C, T); the result has shape (..., C * 6), channel-major.
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    if not 0 <= warmup < T:
        raise ValueError(f"warmup must lie in [0, {T}), got {warmup}")
    seg = x[..., warmup:]
    if seg.shape[-1] > 1:
        masd = np.abs(np.diff(seg, axis=-1)).mean(axis=-1)
    else:
        masd = np.zeros(seg.shape[:-1])
    stats = np.stack(
        [
            seg.mean(axis=-1),
            seg.std(axis=-1),
            seg.min(axis=-1),
            seg.max(axis=-1),
            np.sqrt((seg * seg).mean(axis=-1)),
            masd,
        ],
        axis=-1,
    )
    return stats.reshape(*stats.shape[:-2], -1)


def summarize(fc: FeatureChannels, warmup: int = DEFAULT_WARMUP) -> np.ndarray:
    """36-dim feature vector for one window."""
    return summary_stats(fc.data, warmup)


def feature_names(raw: bool = False) -> list[str]:
    chans = RAW_CHANNEL_NAMES if raw else CHANNEL_NAMES
    return [f"{c}_{s}" for c in chans for s in STAT_NAMES]


def extract_features(
    windows, cfg: FracConfig, warmup: int = DEFAULT_WARMUP, raw: bool = False
) -> np.ndarray:
    """Feature matrix for a list of windows (or an (n, 3, T) array).

    ``raw=True`` skips the fractional operators and summarises V, P, Q
    directly (18 columns).
    """
    if isinstance(windows, np.ndarray):
        stack = windows
    else:
        stack = np.stack([w.data for w in windows])
    if raw:
        return summary_stats(stack, warmup)
    return summary_stats(channels_batch(stack, cfg), warmup)


@dataclass
class Normalizer:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    std: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fitted: bool = False

    STD_FLOOR = 1e-9

    def apply(self, x):
        if not self.fitted:
            raise RuntimeError("normalizer has not been fitted")
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, z):
        if not self.fitted:
            raise RuntimeError("normalizer has not been fitted")
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Normalizer:
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64), True)


def fit_normalizer(vectors) -> Normalizer:
    X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if X.shape[0] == 0 or X.size == 0:
        raise ValueError("cannot fit a normalizer on an empty set")
    return Normalizer(X.mean(axis=0), np.maximum(X.std(axis=0), Normalizer.STD_FLOOR), True)


def apply_normalizer(nz: Normalizer, v):
    return nz.apply(v)
