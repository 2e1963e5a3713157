"""Cyber-attack injectors on raw windows and PGD on feature vectors."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass

import numpy as np

from .signalgen import Window

_MASK64 = (1 << 64) - 1


class AttackKind(enum.IntEnum):
    """Curriculum order is the integer value."""

    NONE = 0
    BIAS = 1
    NOISE = 2
    REPLACEMENT = 3
    REPLAY = 4

    @classmethod
    def parse(cls, name) -> AttackKind:
        if isinstance(name, AttackKind):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown attack kind {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.capitalize()


_DIFFICULTY = {
    AttackKind.NONE: 0.0,
    AttackKind.BIAS: 0.2,
    AttackKind.NOISE: 0.4,
    AttackKind.REPLACEMENT: 0.7,
    AttackKind.REPLAY: 1.0,
}

CURRICULUM = tuple(AttackKind)


def difficulty(kind: AttackKind) -> float:
    return _DIFFICULTY[AttackKind(kind)]


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind = AttackKind.NONE
    bias_frac: float = 0.10
    noise_frac: float = 0.05
    repl_frac: float = 0.20
    stale_lag: int = 50
    replay_frac: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind.parse(self.kind))
        for name in ("bias_frac", "noise_frac", "repl_frac", "replay_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.stale_lag < 1:
            raise ValueError("stale_lag must be >= 1")

    def to_json(self) -> str:
        d = asdict(self)
        d["kind"] = self.kind.name
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> AttackSpec:
        return cls(**json.loads(text))


def _rng(spec: AttackSpec, w: Window) -> np.random.Generator:
    # per-window stream: the same spec hits two windows with independent draws
    return np.random.default_rng([int(spec.seed) & _MASK64, int(w.seed) & _MASK64, int(spec.kind)])


def apply_bias(w: Window, nominal, spec: AttackSpec) -> Window:
    offset = spec.bias_frac * np.asarray(nominal, dtype=np.float64)
    return w.replace_data(w.data + offset[:, None])


def apply_noise(w: Window, nominal, spec: AttackSpec) -> Window:
    if spec.noise_frac == 0:
        return w.replace_data(w.data.copy())
    sigma = spec.noise_frac * np.asarray(nominal, dtype=np.float64)
    noise = _rng(spec, w).standard_normal(w.data.shape)
    return w.replace_data(w.data + sigma[:, None] * noise)


def replacement_indices(n: int, spec: AttackSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.stale_lag >= n:
        raise ValueError(f"stale_lag {spec.stale_lag} must be shorter than the window ({n})")
    k = int(np.floor(spec.repl_frac * n))
    k = min(k, n - spec.stale_lag)
    return np.sort(rng.choice(n - spec.stale_lag, size=k, replace=False) + spec.stale_lag)


def apply_replacement(w: Window, spec: AttackSpec) -> Window:
    """Overwrite a random subset of samples with the reading ``stale_lag`` earlier."""
    n = len(w)
    idx = replacement_indices(n, spec, _rng(spec, w))
    data = w.data.copy()
    data[:, idx] = w.data[:, idx - spec.stale_lag]
    return w.replace_data(data)


def apply_replay(w: Window, normal_archive, spec: AttackSpec) -> Window:
    """Overwrite one contiguous segment with the same span of an archived normal window."""
    if len(normal_archive) == 0:
        raise ValueError("replay attack needs a non-empty normal archive")
    n = len(w)
    k = int(np.floor(spec.replay_frac * n))
    data = w.data.copy()
    if k == 0:
        return w.replace_data(data)
    rng = _rng(spec, w)
    src = normal_archive[int(rng.integers(len(normal_archive)))]
    if len(src) != n:
        raise ValueError("archived window length differs from the attacked window")
    start = int(rng.integers(n - k + 1))
    data[:, start:start + k] = src.data[:, start:start + k]
    return w.replace_data(data)


def apply_attack(w: Window, spec: AttackSpec, nominal, normal_archive=()) -> Window:
    kind = spec.kind
    if kind == AttackKind.NONE:
        return w
    if kind == AttackKind.BIAS:
        return apply_bias(w, nominal, spec)
    if kind == AttackKind.NOISE:
        return apply_noise(w, nominal, spec)
    if kind == AttackKind.REPLACEMENT:
        return apply_replacement(w, spec)
    return apply_replay(w, normal_archive, spec)


def attack_windows(windows, spec: AttackSpec, nominal, normal_archive=()) -> list[Window]:
    return [apply_attack(w, spec, nominal, normal_archive) for w in windows]


@dataclass(frozen=True)
class PgdConfig:
    epsilon: float = 0.1
    steps: int = 10
    step_size: float = 0.025
    random_start: bool = True

    def __post_init__(self):
        # epsilon = 0 is accepted as the degenerate (identity) ball
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 <= self.step_size <= self.epsilon:
            raise ValueError("step_size must lie in [0, epsilon]")


def pgd_attack(grad_fn, x, y, cfg: PgdConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """l-inf PGD around ``x``.

    ``grad_fn(x, y)`` must return d loss / d x with the same shape as ``x``;
    ``x`` may be a single vector or a batch of rows.
    """
    x = np.asarray(x, dtype=np.float64)
    eps = cfg.epsilon
    lo, hi = x - eps, x + eps
    adv = x.copy()
    if cfg.random_start and eps > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        adv = adv + rng.uniform(-eps, eps, size=x.shape)
    for _ in range(cfg.steps):
        g = np.asarray(grad_fn(adv, y), dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient in pgd_attack")
        adv = np.clip(adv + cfg.step_size * np.sign(g), lo, hi)
    if eps == 0:
        adv = x.copy()
    assert np.max(np.abs(adv - x), initial=0.0) <= eps + 1e-12
    return adv
