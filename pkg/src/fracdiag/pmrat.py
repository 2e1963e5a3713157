"""Progressive memory-replay adversarial training.

The curriculum walks None -> Bias -> Noise -> Replacement -> Replay. Each batch
mixes clean samples, samples hit by the current stage's attack (then pushed
around by PGD in feature space) and samples replayed from a FIFO buffer of
earlier hard examples. The hardest fraction of each batch gets extra weight
``lambda = 0.5 * difficulty(stage)`` in the loss and is remembered in the
buffer.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model as mlp
from .attacks import CURRICULUM, AttackKind, AttackSpec, PgdConfig, attack_windows, difficulty, pgd_attack
from .fracfeat import DEFAULT_WARMUP, FracConfig, extract_features, fit_normalizer
from .signalgen import (
    N_CLASSES,
    N_INVERTERS,
    N_SWITCHES,
    Dataset,
    flat_to_stage1,
    flat_to_stage2,
    mix_seed,
    nominal_magnitudes,
    normal_archive,
)

LOG_FIELDS = ("stage", "epoch", "loss", "val_acc", "lambda", "buffer_size", "selection")
ARCHIVE_SIZE = 64


class Variant(enum.Enum):
    FULL = "full"
    NO_OHEM = "no_ohem"
    NO_FRAC_FEAT = "no_frac_feat"

    @classmethod
    def parse(cls, name) -> Variant:
        if isinstance(name, Variant):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"noohem": "no_ohem", "nofracfeat": "no_frac_feat"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class TrainConfig:
    epochs_per_stage: int = 20
    batch: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    lr_decay_per_stage: float = 0.5
    ohem_frac: float = 0.2
    clean_frac: float = 0.5
    current_attack_frac: float = 0.25
    replay_frac_batch: float = 0.25
    buffer_cap: int = 2000
    pgd: PgdConfig = field(default_factory=PgdConfig)
    seed: int = 0
    stage1_hidden: tuple[int, ...] = (64, 32)
    stage2_hidden: tuple[int, ...] = (32,)
    stages: tuple[AttackKind, ...] = CURRICULUM
    # attack strengths used to build the training pools; seed is overridden per stage
    attack: AttackSpec = field(default_factory=AttackSpec)
    steps_per_epoch: int | None = None
    # global gradient-norm cap per network update; 0 disables
    grad_clip: float = 1.0

    def __post_init__(self):
        if abs(self.clean_frac + self.current_attack_frac + self.replay_frac_batch - 1.0) > 1e-9:
            raise ValueError("batch fractions must sum to 1")
        if not 0 < self.ohem_frac <= 1:
            raise ValueError("ohem_frac must lie in (0, 1]")
        if self.batch < 1 or self.epochs_per_stage < 1 or self.buffer_cap < 1:
            raise ValueError("batch, epochs_per_stage and buffer_cap must be positive")
        if self.grad_clip < 0:
            raise ValueError("grad_clip must be >= 0")
        stages = tuple(AttackKind.parse(s) for s in self.stages)
        if list(stages) != sorted(set(stages)):
            raise ValueError("stages must follow the curriculum order without repeats")
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "stage1_hidden", tuple(int(h) for h in self.stage1_hidden))
        object.__setattr__(self, "stage2_hidden", tuple(int(h) for h in self.stage2_hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stages"] = [k.name for k in self.stages]
        d["attack"]["kind"] = self.attack.kind.name
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        if "pgd" in d:
            d["pgd"] = PgdConfig(**d["pgd"])
        if "attack" in d:
            d["attack"] = AttackSpec(**d["attack"])
        for key in ("stages", "stage1_hidden", "stage2_hidden"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def stage_lambda(kind: AttackKind) -> float:
    return 0.5 * difficulty(kind)


class ReplayBuffer:
    """Bounded FIFO of (feature vector, flat label, attack kind)."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._x = np.zeros((capacity, dim))
        self._y = np.zeros(capacity, dtype=np.int64)
        self._k = np.zeros(capacity, dtype=np.int64)
        self._head = 0  # next write slot
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, x, y, kind):
        X = np.atleast_2d(x)
        Y = np.broadcast_to(np.asarray(y, dtype=np.int64), (len(X),))
        K = np.broadcast_to(np.asarray(kind, dtype=np.int64), (len(X),))
        for xi, yi, ki in zip(X, Y, K):
            self._x[self._head] = xi
            self._y[self._head] = yi
            self._k[self._head] = ki
            self._head = (self._head + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        start = (self._head - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def items(self):
        """Contents oldest first as (X, y, kinds)."""
        o = self._order()
        return self._x[o].copy(), self._y[o].copy(), self._k[o].copy()

    def sample(self, n: int, rng: np.random.Generator):
        o = self._order()
        pick = o[rng.choice(self._size, size=n, replace=False)]
        return self._x[pick].copy(), self._y[pick].copy(), self._k[pick].copy()


def ohem_select(losses, frac: float) -> np.ndarray:
    """Indices of the ``ceil(frac * N)`` largest losses; ties go to the lower index."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("ohem_select needs at least one loss")
    if not 0 < frac <= 1:
        raise ValueError("frac must lie in (0, 1]")
    k = math.ceil(frac * losses.size - 1e-12)
    order = np.lexsort((np.arange(losses.size), -losses))
    return np.sort(order[:k])


def total_loss(clean_losses, hard_losses, lam: float) -> float:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    clean = float(np.mean(clean_losses)) if len(clean_losses) else 0.0
    hard = float(np.mean(hard_losses)) if len(hard_losses) else 0.0
    return clean + lam * hard


@dataclass
class Batch:
    X: np.ndarray
    y: np.ndarray
    kinds: np.ndarray
    source: np.ndarray  # 0 clean, 1 current-stage attacked, 2 replayed

    CLEAN, ATTACKED, REPLAYED = 0, 1, 2

    def __len__(self):
        return len(self.y)


def batch_counts(stage: AttackKind, cfg: TrainConfig) -> tuple[int, int, int]:
    if stage == AttackKind.NONE:
        return cfg.batch, 0, 0
    n_clean = int(round(cfg.batch * cfg.clean_frac))
    n_att = int(round(cfg.batch * cfg.current_attack_frac))
    return n_clean, n_att, cfg.batch - n_clean - n_att


def compose_batch(stage, clean, attacked, buffer: ReplayBuffer | None, cfg: TrainConfig, seed) -> Batch:
    """Draw one training batch.

    ``clean`` and ``attacked`` are ``(X, y)`` pools; ``seed`` is an int or a
    ``numpy.random.Generator``. Replay slots the buffer cannot fill are
    backfilled from the clean pool.
    """
    rng = np.random.default_rng(seed)
    stage = AttackKind(stage)
    n_clean, n_att, n_rep = batch_counts(stage, cfg)
    n_buf = min(n_rep, len(buffer)) if buffer is not None else 0
    n_clean += n_rep - n_buf
    Xc, yc = clean
    ci = rng.choice(len(yc), size=n_clean, replace=len(yc) < n_clean)
    parts_x, parts_y = [Xc[ci]], [yc[ci]]
    kinds = [np.zeros(n_clean, dtype=np.int64)]
    source = [np.full(n_clean, Batch.CLEAN)]
    if n_att:
        Xa, ya = attacked
        ai = rng.choice(len(ya), size=n_att, replace=len(ya) < n_att)
        parts_x.append(Xa[ai])
        parts_y.append(ya[ai])
        kinds.append(np.full(n_att, int(stage)))
        source.append(np.full(n_att, Batch.ATTACKED))
    if n_buf:
        bx, by, bk = buffer.sample(n_buf, rng)
        parts_x.append(bx)
        parts_y.append(by)
        kinds.append(bk)
        source.append(np.full(n_buf, Batch.REPLAYED))
    return Batch(
        np.concatenate(parts_x),
        np.concatenate(parts_y).astype(np.int64),
        np.concatenate(kinds),
        np.concatenate(source),
    )


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)
    lambdas: list[float] = field(default_factory=list)
    kinds_seen: dict[str, list[str]] = field(default_factory=dict)
    buffer_after_stage: list[int] = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=LOG_FIELDS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _fmt(r[k]) for k in LOG_FIELDS})


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _hard_set(variant: Variant, losses, sources, frac, rng) -> np.ndarray:
    if variant != Variant.NO_OHEM:
        return ohem_select(losses, frac)
    # uniform draw from the attacked part instead of the hardest samples
    pool = np.flatnonzero(sources == Batch.ATTACKED)
    if pool.size == 0:
        return pool
    k = min(pool.size, math.ceil(frac * len(losses) - 1e-12))
    return np.sort(rng.choice(pool, size=k, replace=False))


def clip_grad_norm(grads: mlp.MlpParams, max_norm: float) -> mlp.MlpParams:
    if max_norm <= 0:
        return grads
    norm = math.sqrt(sum(float(np.sum(a * a)) for a in grads.arrays()))
    if norm <= max_norm:
        return grads
    s = max_norm / norm
    return mlp.MlpParams([g * s for g in grads.weights], [g * s for g in grads.biases], grads.seed)


def _weighted_step(params, velocity, X, y, hard, lam, cfg: TrainConfig, lr):
    """One SGD step on mean CE + lam * mean CE over ``hard``."""
    B = len(y)
    w = np.full(B, 1.0 / B)
    if hard.size and lam > 0:
        w[hard] += lam / hard.size
    grads, _ = mlp.backward(params, X, y, w)
    return mlp.sgd_step(params, clip_grad_norm(grads, cfg.grad_clip), lr, cfg.momentum, velocity)


@dataclass
class Prepared:
    """Normalised feature pools for one training run."""

    X: np.ndarray
    y: np.ndarray
    pools: dict
    normalizer: object
    frac: FracConfig
    warmup: int
    raw: bool
    val: tuple | None = None


def prepare(
    train: Dataset,
    cfg: TrainConfig,
    frac: FracConfig | None = None,
    warmup: int = DEFAULT_WARMUP,
    raw: bool = False,
    val: Dataset | None = None,
) -> Prepared:
    """Extract features for the clean set and every attacked pool in ``cfg.stages``."""
    labels = train.labels
    missing = sorted(set(range(N_CLASSES)) - set(labels.tolist()))
    if missing:
        raise ValueError(f"training split lacks classes {missing}")
    frac = frac if frac is not None else FracConfig(dt=train.cfg.dt)
    F = extract_features(train.windows, frac, warmup, raw)
    nominal = nominal_magnitudes(train.cfg)
    archive = normal_archive(train.cfg, ARCHIVE_SIZE, mix_seed(cfg.seed, 0xA2C))
    pools = {}
    for kind in cfg.stages:
        if kind == AttackKind.NONE:
            continue
        spec = AttackSpec(
            kind,
            cfg.attack.bias_frac,
            cfg.attack.noise_frac,
            cfg.attack.repl_frac,
            cfg.attack.stale_lag,
            cfg.attack.replay_frac,
            seed=mix_seed(cfg.seed, 0xA77, int(kind)),
        )
        hit = attack_windows(train.windows, spec, nominal, archive)
        pools[kind] = extract_features(hit, frac, warmup, raw)
    # scale on everything the network will see; attacked GL statistics sit
    # hundreds of clean standard deviations away
    nz = fit_normalizer(np.vstack([F, *pools.values()]))
    pools = {k: (nz.apply(P), labels) for k, P in pools.items()}
    v = None
    if val is not None and len(val):
        v = (nz.apply(extract_features(val.windows, frac, warmup, raw)), val.labels)
    return Prepared(nz.apply(F), labels, pools, nz, frac, warmup, raw, v)


def _flat_accuracy(m: mlp.HierModel, Z, y) -> float:
    calls = m.stage2_calls
    pred, _ = m.predict_batch(Z)
    m.stage2_calls = calls  # validation passes are not part of the instrumented count
    return float(np.mean(pred == y))


def train_prepared(prep: Prepared, cfg: TrainConfig, variant: Variant = Variant.FULL):
    """Run the curriculum on precomputed pools. Returns ``(HierModel, TrainLog)``."""
    variant = Variant.parse(variant)
    D = prep.X.shape[1]
    s1 = mlp.init_params((D, *cfg.stage1_hidden, N_INVERTERS + 1), mix_seed(cfg.seed, 1))
    s2 = [
        mlp.init_params((D, *cfg.stage2_hidden, N_SWITCHES), mix_seed(cfg.seed, 2, i))
        for i in range(N_INVERTERS)
    ]
    v1 = None
    v2 = [None] * N_INVERTERS
    buffer = ReplayBuffer(cfg.buffer_cap, D)
    rng = np.random.default_rng(mix_seed(cfg.seed, 0x7A1))
    steps = cfg.steps_per_epoch or max(1, math.ceil(len(prep.y) / cfg.batch))
    log = TrainLog()
    clean = (prep.X, prep.y)
    selection = "uniform" if variant == Variant.NO_OHEM else "ohem"

    def snapshot():
        return mlp.HierModel(s1, s2, prep.normalizer, prep.frac, prep.warmup, prep.raw)

    for stage_idx, kind in enumerate(cfg.stages):
        lam = stage_lambda(kind)
        lr = cfg.lr * cfg.lr_decay_per_stage**stage_idx
        log.lambdas.append(lam)
        seen = set()
        attacked = prep.pools.get(kind)
        for epoch in range(cfg.epochs_per_stage):
            epoch_loss = 0.0
            for _ in range(steps):
                b = compose_batch(kind, clean, attacked, buffer, cfg, rng)
                y1 = flat_to_stage1(b.y)
                att = np.flatnonzero(b.source == Batch.ATTACKED)
                if att.size:
                    X = b.X.copy()
                    X[att] = pgd_attack(
                        lambda x, y, p=s1: mlp.input_gradient(p, x, y), X[att], y1[att], cfg.pgd, rng
                    )
                else:
                    X = b.X
                seen.update(AttackKind(k).name for k in np.unique(b.kinds))

                losses = mlp.per_sample_loss(s1, X, y1)
                hard = _hard_set(variant, losses, b.source, cfg.ohem_frac, rng)
                epoch_loss += total_loss(losses, losses[hard], lam)
                s1, v1 = _weighted_step(s1, v1, X, y1, hard, lam, cfg, lr)

                push = hard[b.source[hard] == Batch.ATTACKED]
                if push.size:
                    buffer.push(X[push], b.y[push], b.kinds[push])

                y2 = flat_to_stage2(b.y)
                for i in range(N_INVERTERS):
                    rows = np.flatnonzero(y1 == i + 1)
                    if rows.size == 0:
                        continue
                    Xi, yi = X[rows], y2[rows]
                    li = mlp.per_sample_loss(s2[i], Xi, yi)
                    hi = _hard_set(variant, li, b.source[rows], cfg.ohem_frac, rng)
                    s2[i], v2[i] = _weighted_step(s2[i], v2[i], Xi, yi, hi, lam, cfg, lr)

            val_acc = _flat_accuracy(snapshot(), *prep.val) if prep.val is not None else float("nan")
            log.rows.append(
                {
                    "stage": kind.name,
                    "epoch": epoch,
                    "loss": epoch_loss / steps,
                    "val_acc": val_acc,
                    "lambda": lam,
                    "buffer_size": len(buffer),
                    "selection": selection,
                }
            )
        log.kinds_seen[kind.name] = sorted(seen)
        log.buffer_after_stage.append(len(buffer))

    m = snapshot()
    m.meta = {"variant": variant.value, "train_config": cfg.to_dict()}
    return m, log


def run_curriculum(
    train: Dataset,
    cfg: TrainConfig,
    val: Dataset | None = None,
    frac: FracConfig | None = None,
    warmup: int = DEFAULT_WARMUP,
):
    """Whole curriculum on fractional features. Returns ``(HierModel, TrainLog)``."""
    return train_prepared(prepare(train, cfg, frac, warmup, raw=False, val=val), cfg, Variant.FULL)


def train_ablation(
    variant,
    train: Dataset,
    cfg: TrainConfig,
    val: Dataset | None = None,
    frac: FracConfig | None = None,
    warmup: int = DEFAULT_WARMUP,
):
    """Train one of the ablation variants. Returns ``(HierModel, TrainLog)``.

    ``no_ohem`` swaps the hardest-sample selection for a uniform draw from the
    attacked part of each batch; ``no_frac_feat`` feeds the six statistics of
    the raw V, P, Q channels (18 inputs) instead of the fractional channels.
    """
    variant = Variant.parse(variant)
    raw = variant == Variant.NO_FRAC_FEAT
    prep = prepare(train, cfg, frac, warmup, raw=raw, val=val)
    return train_prepared(prep, cfg, variant)
