"""Splits, three-level metrics, ablation grid and hyper-parameter sweep."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import AttackKind, AttackSpec, attack_windows
from .fracfeat import FracConfig, extract_features
from .model import HierModel
from .pmrat import TrainConfig, Variant, prepare, train_prepared
from .signalgen import (
    N_CLASSES,
    Dataset,
    GridConfig,
    flat_to_stage1,
    generate_dataset,
    mix_seed,
    nominal_magnitudes,
    normal_archive,
)

SCENARIOS = tuple(AttackKind)
ARCHIVE_SIZE = 64
SWITCH_DENOMINATOR_NOTE = (
    "switch_acc = correct switch / fault samples whose inverter was localised correctly"
)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_frac < 1:
            raise ValueError("train_frac must lie in (0, 1)")


def _subset(ds: Dataset, idx) -> Dataset:
    windows = [ds.windows[i] for i in idx]
    counts = np.bincount([w.label.flat for w in windows], minlength=N_CLASSES)
    return Dataset(windows, ds.cfg, ds.base_seed, counts.tolist())


def split(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Deterministic train/test split.

    Stratified mode keeps every class within one sample of ``train_frac`` of
    its count and hits ``round(train_frac * n)`` training windows overall.
    """
    labels = ds.labels
    rng = np.random.default_rng(mix_seed(spec.seed, 0x5B17))
    n = len(labels)
    n_train = int(round(spec.train_frac * n))
    if not spec.stratified:
        perm = rng.permutation(n)
        return _subset(ds, np.sort(perm[:n_train])), _subset(ds, np.sort(perm[n_train:]))
    classes = np.unique(labels)
    members = {c: np.flatnonzero(labels == c) for c in classes}
    if any(len(m) < 2 for m in members.values()):
        raise ValueError("every class needs at least 2 windows to split")
    quota = {c: int(np.floor(spec.train_frac * len(members[c]))) for c in classes}
    extra = n_train - sum(quota.values())
    for c in rng.permutation(classes):
        if extra <= 0:
            break
        if quota[c] < len(members[c]) - 1:
            quota[c] += 1
            extra -= 1
    train_idx, test_idx = [], []
    for c in classes:
        q = min(max(quota[c], 1), len(members[c]) - 1)
        perm = rng.permutation(members[c])
        train_idx.extend(perm[:q])
        test_idx.extend(perm[q:])
    return _subset(ds, np.sort(train_idx)), _subset(ds, np.sort(test_idx))


@dataclass
class Metrics:
    overall_acc: float
    inverter_acc: float
    switch_acc: float
    switch_defined: bool
    confusion_25: np.ndarray = field(repr=False)
    n: int = 0
    stage2_calls_on_normal: int = 0

    def to_dict(self) -> dict:
        return {
            "overall_acc": self.overall_acc,
            "inverter_acc": self.inverter_acc,
            "switch_acc": self.switch_acc,
            "switch_defined": self.switch_defined,
            "n": self.n,
            "stage2_calls_on_normal": self.stage2_calls_on_normal,
            "confusion_25": self.confusion_25.tolist(),
            "note": SWITCH_DENOMINATOR_NOTE,
        }


def compute_metrics(y_true, y_pred) -> Metrics:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ValueError("cannot evaluate on an empty set")
    inv_t, inv_p = flat_to_stage1(y_true), flat_to_stage1(y_pred)
    conf = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    mask = (inv_t > 0) & (inv_t == inv_p)
    defined = bool(mask.any())
    sw = float(np.mean(y_pred[mask] == y_true[mask])) if defined else 0.0
    return Metrics(
        float(np.mean(y_true == y_pred)),
        float(np.mean(inv_t == inv_p)),
        sw,
        defined,
        conf,
        int(y_true.size),
    )


def scenario_spec(kind, seed: int, base: AttackSpec | None = None) -> AttackSpec:
    base = base or AttackSpec()
    return replace(base, kind=AttackKind.parse(kind), seed=seed)


def attacked_test_windows(ds: Dataset, attack: AttackSpec, archive=None):
    """Every window of ``ds`` under ``attack``; replay draws from a seeded normal archive."""
    if archive is None:
        archive = normal_archive(ds.cfg, ARCHIVE_SIZE, mix_seed(attack.seed, 0xE7A))
    return attack_windows(ds.windows, attack, nominal_magnitudes(ds.cfg), archive)


def attacked_features(m: HierModel, ds: Dataset, attack: AttackSpec, archive=None) -> np.ndarray:
    hit = attacked_test_windows(ds, attack, archive)
    return m.normalizer.apply(extract_features(hit, m.frac, m.warmup, m.raw_features))


def evaluate(m: HierModel, test: Dataset, attack: AttackSpec = AttackSpec(), archive=None) -> Metrics:
    """Attack every test window, extract features, predict and score."""
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    Z = attacked_features(m, test, attack, archive)
    before = m.stage2_calls
    pred, s1 = m.predict_batch(Z)
    calls = m.stage2_calls - before
    met = compute_metrics(test.labels, pred)
    # stage 2 only runs on rows with a fault prediction, so calls == #fault predictions
    met.stage2_calls_on_normal = calls - int(np.count_nonzero(s1 > 0))
    return met


def metrics_csv(results: dict[str, Metrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "overall_acc", "inverter_acc", "switch_acc", "switch_defined", "n"])
    for name, m in results.items():
        w.writerow([name, repr(m.overall_acc), repr(m.inverter_acc), repr(m.switch_acc), m.switch_defined, m.n])
    return buf.getvalue()


def evaluate_scenarios(m: HierModel, test: Dataset, seed: int, base: AttackSpec | None = None, kinds=SCENARIOS):
    return {AttackKind(k).label: evaluate(m, test, scenario_spec(k, seed, base)) for k in kinds}


@dataclass
class AblationReport:
    """Rows are variants, columns are scenarios; each cell is a list of per-seed overall accuracies."""

    variants: tuple[Variant, ...]
    scenarios: tuple[AttackKind, ...]
    cells: dict = field(default_factory=dict)

    def mean(self, variant, scenario) -> float:
        return float(np.mean(self.cells[(Variant.parse(variant), AttackKind.parse(scenario))]))

    def grid(self) -> np.ndarray:
        return np.array([[self.mean(v, s) for s in self.scenarios] for v in self.variants])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", *[s.label for s in self.scenarios]])
        for v, row in zip(self.variants, self.grid()):
            w.writerow([v.value, *[repr(float(x)) for x in row]])
        return buf.getvalue()


def run_ablation(
    splits,
    cfg: TrainConfig,
    variants=tuple(Variant),
    scenarios=SCENARIOS,
    eval_seed: int | None = None,
    report: AblationReport | None = None,
) -> AblationReport:
    """Train every variant on each ``(train, test)`` pair with shared seeds and score all scenarios.

    Passing several splits (one per seed) fills each cell with several values.
    """
    variants = tuple(Variant.parse(v) for v in variants)
    scenarios = tuple(AttackKind.parse(s) for s in scenarios)
    report = report or AblationReport(variants, scenarios)
    for train, test in splits:
        for v in variants:
            m, _ = train_prepared(prepare(train, cfg, raw=v == Variant.NO_FRAC_FEAT), cfg, v)
            seed = cfg.seed if eval_seed is None else eval_seed
            for s in scenarios:
                acc = evaluate(m, test, scenario_spec(s, seed, cfg.attack)).overall_acc
                report.cells.setdefault((v, s), []).append(acc)
    return report


DEFAULT_ALPHAS = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_LENGTHS = (100, 200, 400, 800)


def sweep(
    alphas=DEFAULT_ALPHAS,
    lengths=DEFAULT_LENGTHS,
    grid: GridConfig = GridConfig(),
    n_total: int = 5600,
    base_seed: int = 0,
    split_spec: SplitSpec = SplitSpec(),
    cfg: TrainConfig = TrainConfig(),
    beta: float = 0.3,
) -> list[dict]:
    """Clean validation accuracy over an (alpha, window length) grid.

    Each length regenerates the dataset with that window length; the memory
    length equals the window length and the warm-up is a quarter of it.
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    alphas = sorted({float(a) for a in alphas})
    lengths = sorted({int(L) for L in lengths})
    for a in alphas:
        if not 0 < a < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {a}")
    rows = []
    for L in lengths:
        g = replace(grid, window_len=L)
        train, test = split(generate_dataset(g, n_total, base_seed), split_spec)
        for a in alphas:
            frac = FracConfig(a, beta, L, g.dt)
            m, _ = train_prepared(prepare(train, cfg, frac, warmup=L // 4), cfg)
            acc = evaluate(m, test).overall_acc
            rows.append({"alpha": a, "window_len": L, "beta": beta, "val_acc": acc})
    return rows


def rows_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def metrics_json(results: dict[str, Metrics]) -> str:
    return json.dumps({k: v.to_dict() for k, v in results.items()}, sort_keys=True, indent=1)


__all__ = [
    "AblationReport",
    "Metrics",
    "SplitSpec",
    "compute_metrics",
    "evaluate",
    "evaluate_scenarios",
    "run_ablation",
    "split",
    "sweep",
]
