"""Parametric surrogate for a four-inverter microgrid seen from one PCC meter.

Every window is a per-unit (V, P, Q) record. Normal operation is a steady
operating point scaled by a random load level; a single open IGBT in inverter
``i`` superimposes a half-wave asymmetric signature whose amplitude follows
that inverter's share of the supplied power and whose phase/polarity follow
the faulty leg and bridge half.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

N_INVERTERS = 4
N_SWITCHES = 6
N_CLASSES = 1 + N_INVERTERS * N_SWITCHES
CHANNELS = ("V", "P", "Q")

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class GridConfig:
    fundamental_hz: float = 50.0
    sample_hz: float = 2000.0
    window_len: int = 400
    inverter_shares: tuple[float, float, float, float] = (0.35, 0.28, 0.22, 0.15)
    load_jitter: float = 0.20
    meas_noise: float = 0.005
    # per-unit bases; also the nominal magnitudes attacks are scaled against
    v_base: float = 1.0
    p_base: float = 1.0
    q_base: float = 0.3

    def __post_init__(self):
        shares = tuple(float(s) for s in self.inverter_shares)
        object.__setattr__(self, "inverter_shares", shares)
        if len(shares) != N_INVERTERS:
            raise ValueError(f"need {N_INVERTERS} inverter shares, got {len(shares)}")
        if any(s <= 0 for s in shares) or abs(sum(shares) - 1.0) > 1e-12:
            raise ValueError("inverter_shares must be positive and sum to 1")
        if self.window_len < 2:
            raise ValueError("window_len must be >= 2")
        if self.sample_hz <= 2 * self.fundamental_hz:
            raise ValueError("sample_hz must exceed twice the fundamental")
        if not 0 <= self.load_jitter < 1:
            raise ValueError("load_jitter must lie in [0, 1)")
        if self.meas_noise < 0:
            raise ValueError("meas_noise must be >= 0")
        if min(self.v_base, self.p_base, self.q_base) <= 0:
            raise ValueError("per-unit bases must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_hz

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inverter_shares"] = list(self.inverter_shares)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> GridConfig:
        d = dict(d)
        d["inverter_shares"] = tuple(d["inverter_shares"])
        return cls(**d)


@dataclass(frozen=True, order=True)
class HierLabel:
    """Two-level label: ``inverter`` 0 means Normal, 1..4 a faulty inverter;
    ``switch`` 1..6 is present only for faults."""

    inverter: int
    switch: int | None = None

    def __post_init__(self):
        if not 0 <= self.inverter <= N_INVERTERS:
            raise ValueError(f"inverter must be in 0..{N_INVERTERS}, got {self.inverter}")
        if self.inverter == 0:
            if self.switch is not None:
                raise ValueError("Normal label cannot carry a switch")
        elif self.switch is None or not 1 <= self.switch <= N_SWITCHES:
            raise ValueError(f"fault label needs switch in 1..{N_SWITCHES}, got {self.switch}")

    @property
    def is_normal(self) -> bool:
        return self.inverter == 0

    @property
    def flat(self) -> int:
        if self.inverter == 0:
            return 0
        return 1 + N_SWITCHES * (self.inverter - 1) + (self.switch - 1)

    @classmethod
    def from_flat(cls, index: int) -> HierLabel:
        index = int(index)
        if not 0 <= index < N_CLASSES:
            raise ValueError(f"flat label must be in 0..{N_CLASSES - 1}, got {index}")
        if index == 0:
            return cls(0)
        inv, sw = divmod(index - 1, N_SWITCHES)
        return cls(inv + 1, sw + 1)

    def __str__(self):
        return "Normal" if self.inverter == 0 else f"Inv{self.inverter}/S{self.switch}"


NORMAL = HierLabel(0)


def flat_to_stage1(flat):
    """Vectorised flat index -> inverter index (0 = Normal)."""
    flat = np.asarray(flat)
    return np.where(flat == 0, 0, (flat - 1) // N_SWITCHES + 1)


def flat_to_stage2(flat):
    """Vectorised flat index -> 0-based switch index (-1 for Normal)."""
    flat = np.asarray(flat)
    return np.where(flat == 0, -1, (flat - 1) % N_SWITCHES)


@dataclass
class Window:
    """One measurement segment. ``data`` rows are V, P, Q."""

    data: np.ndarray
    dt: float
    label: HierLabel
    seed: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] != 3:
            raise ValueError(f"window data must have shape (3, n), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("window contains non-finite samples")

    @property
    def v(self) -> np.ndarray:
        return self.data[0]

    @property
    def p(self) -> np.ndarray:
        return self.data[1]

    @property
    def q(self) -> np.ndarray:
        return self.data[2]

    def __len__(self):
        return self.data.shape[1]

    def replace_data(self, data) -> Window:
        return Window(data, self.dt, self.label, self.seed)


@dataclass
class Dataset:
    windows: list[Window]
    cfg: GridConfig
    base_seed: int
    class_counts: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.windows)

    @property
    def labels(self) -> np.ndarray:
        return np.array([w.label.flat for w in self.windows], dtype=np.int64)

    def stacked(self) -> np.ndarray:
        """All samples as an array of shape (n_windows, 3, window_len)."""
        return np.stack([w.data for w in self.windows])

    def manifest(self) -> dict:
        return {
            "config": self.cfg.to_dict(),
            "base_seed": int(self.base_seed),
            "class_counts": list(self.class_counts),
            "seeds": [int(w.seed) for w in self.windows],
            "labels": [int(w.label.flat) for w in self.windows],
        }


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 finaliser on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(base_seed: int, *parts: int) -> int:
    """Chain SplitMix64 over ``base_seed`` and each part (all taken mod 2**64)."""
    h = splitmix64(int(base_seed) & _MASK64)
    for part in parts:
        h = splitmix64(h ^ (int(part) & _MASK64))
    return h


def nominal_magnitudes(cfg: GridConfig) -> np.ndarray:
    return np.array([cfg.v_base, cfg.p_base, cfg.q_base], dtype=np.float64)


def fault_signature(cfg: GridConfig, label: HierLabel, load: float) -> np.ndarray:
    """Additive (3, window_len) fault pattern, zero for Normal."""
    sig = np.zeros((3, cfg.window_len))
    if label.is_normal:
        return sig
    share = cfg.inverter_shares[label.inverter - 1]
    phase = ((label.switch - 1) % 3) * 2.0 * math.pi / 3.0
    polarity = 1.0 if label.switch % 2 == 1 else -1.0
    t = np.arange(cfg.window_len) * cfg.dt
    omega = 2.0 * math.pi * cfg.fundamental_hz
    arg = omega * t + phase
    sig[0] = 0.02 * share * np.sin(2.0 * omega * t + phase)
    sig[1] = -0.15 * share * load + 0.25 * share * np.maximum(0.0, polarity * np.sin(arg))
    sig[2] = 0.10 * share * np.sin(arg)
    return sig


def generate_window(cfg: GridConfig, label: HierLabel, seed: int) -> Window:
    rng = np.random.default_rng(int(seed) & _MASK64)
    load = rng.uniform(1.0 - cfg.load_jitter, 1.0 + cfg.load_jitter)
    noise = rng.standard_normal((3, cfg.window_len))
    data = np.empty((3, cfg.window_len))
    data[0] = cfg.v_base
    data[1] = cfg.p_base * load
    data[2] = cfg.q_base * load
    data += fault_signature(cfg, label, load)
    if cfg.meas_noise > 0:
        data += cfg.meas_noise * noise
    return Window(data, cfg.dt, label, int(seed))


def generate_dataset(cfg: GridConfig, n_total: int, base_seed: int) -> Dataset:
    if n_total <= 0 or n_total % N_CLASSES:
        raise ValueError(f"n_total must be a positive multiple of {N_CLASSES}, got {n_total}")
    per_class = n_total // N_CLASSES
    windows = []
    for cls in range(N_CLASSES):
        label = HierLabel.from_flat(cls)
        for rep in range(per_class):
            windows.append(generate_window(cfg, label, mix_seed(base_seed, cls, rep)))
    if len({w.seed for w in windows}) != len(windows):
        raise RuntimeError("seed collision in dataset")  # astronomically unlikely
    return Dataset(windows, cfg, int(base_seed), [per_class] * N_CLASSES)


def normal_archive(cfg: GridConfig, n: int, seed: int) -> list[Window]:
    """Recorded normal-operation windows for replay attacks."""
    return [generate_window(cfg, NORMAL, mix_seed(seed, 0xA4C, i)) for i in range(n)]
