"""Command-line entry point: generate, extract, train, eval, ablate, sweep."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .attacks import AttackKind, AttackSpec, PgdConfig
from .datafile import load_dataset, save_dataset, write_feature_csv
from .evaluate import (
    DEFAULT_ALPHAS,
    DEFAULT_LENGTHS,
    SCENARIOS,
    SplitSpec,
    attacked_test_windows,
    evaluate_scenarios,
    metrics_csv,
    metrics_json,
    rows_csv,
    run_ablation,
    split,
    sweep,
)
from .fracfeat import DEFAULT_WARMUP, FracConfig, extract_features, feature_names
from .model import HierModel
from .pmrat import TrainConfig, Variant, prepare, train_prepared
from .signalgen import GridConfig, generate_dataset


def _flag(prefix: str, name: str) -> str:
    return "--" + (prefix + name).replace("_", "-")


def add_config_args(p: argparse.ArgumentParser, cls, prefix: str = "", skip=()) -> None:
    """One flag per dataclass field, typed after the field's default."""
    group = p.add_argument_group(cls.__name__)
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        dest = prefix.replace("-", "_") + f.name
        if dataclasses.is_dataclass(default):
            continue
        if isinstance(default, bool):
            group.add_argument(_flag(prefix, f.name), dest=dest, type=_parse_bool, default=None,
                               metavar="{true,false}", help=f"default {default}")
        elif isinstance(default, tuple):
            kind = type(default[0]) if default else str
            if kind is AttackKind:
                kind = str
            group.add_argument(_flag(prefix, f.name), dest=dest, nargs="+", type=kind, default=None,
                               help=f"default {' '.join(str(getattr(d, 'name', d)) for d in default)}")
        elif isinstance(default, AttackKind):
            group.add_argument(_flag(prefix, f.name), dest=dest, default=None,
                               help=f"default {default.name}")
        else:
            kind = int if default is None else type(default)
            group.add_argument(_flag(prefix, f.name), dest=dest, type=kind, default=None,
                               help=f"default {default}")


def config_from_args(cls, ns, prefix: str = "", skip=(), **extra):
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        v = getattr(ns, prefix.replace("-", "_") + f.name, None)
        if v is not None:
            kw[f.name] = tuple(v) if isinstance(v, list) else v
    kw.update(extra)
    return cls(**kw)


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {s!r}")


def _add_frac(p):
    add_config_args(p, FracConfig, skip=("dt",))
    p.add_argument("--warmup", type=int, default=DEFAULT_WARMUP)


def _frac(ns, grid: GridConfig) -> FracConfig:
    return config_from_args(FracConfig, ns, skip=("dt",), dt=grid.dt)


def _add_split(p):
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--stratified", type=_parse_bool, default=True, metavar="{true,false}")


def _split_spec(ns) -> SplitSpec:
    return SplitSpec(ns.train_frac, ns.stratified, ns.split_seed)


def _add_train(p):
    add_config_args(p, TrainConfig, skip=("seed",))
    add_config_args(p, PgdConfig, prefix="pgd-")
    add_config_args(p, AttackSpec, prefix="attack-", skip=("kind", "seed"))


def _train_cfg(ns, seed: int) -> TrainConfig:
    return config_from_args(
        TrainConfig,
        ns,
        skip=("seed",),
        seed=seed,
        pgd=config_from_args(PgdConfig, ns, prefix="pgd-"),
        attack=config_from_args(AttackSpec, ns, prefix="attack-", skip=("kind", "seed")),
    )


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_generate(ns) -> None:
    grid = config_from_args(GridConfig, ns)
    ds = generate_dataset(grid, ns.n_total, ns.seed)
    meta, payload = save_dataset(ds, ns.out)
    print(f"wrote {len(ds)} windows to {meta} and {payload}")


def cmd_extract(ns) -> None:
    ds = load_dataset(ns.data)
    windows = ds.windows
    if ns.attack != "none":
        spec = config_from_args(AttackSpec, ns, prefix="attack-", skip=("kind",), kind=ns.attack)
        windows = attacked_test_windows(ds, spec)
    F = extract_features(windows, _frac(ns, ds.cfg), ns.warmup, ns.raw)
    write_feature_csv(ns.out, F, ds.labels, feature_names(ns.raw))
    print(f"wrote {F.shape[0]}x{F.shape[1]} features to {ns.out}")


def cmd_train(ns) -> None:
    ds = load_dataset(ns.data)
    cfg = _train_cfg(ns, ns.seed)
    sp = _split_spec(ns)
    train, test = split(ds, sp)
    variant = Variant.parse(ns.variant)
    prep = prepare(train, cfg, _frac(ns, ds.cfg), ns.warmup, raw=variant == Variant.NO_FRAC_FEAT,
                   val=test if ns.val else None)
    m, log = train_prepared(prep, cfg, variant)
    m.meta["split"] = dataclasses.asdict(sp)
    Path(ns.out).parent.mkdir(parents=True, exist_ok=True)
    m.save(ns.out)
    log_path = ns.log or str(Path(ns.out).with_suffix(".log.csv"))
    log.write_csv(log_path)
    print(f"wrote model {ns.out} and log {log_path}")


def cmd_eval(ns) -> None:
    m = HierModel.load(ns.model)
    ds = load_dataset(ns.data)
    if ns.split_seed is None and "split" in m.meta:
        sp = SplitSpec(**m.meta["split"])
    else:
        sp = SplitSpec(ns.train_frac, ns.stratified, ns.split_seed or 0)
    _, test = split(ds, sp)
    kinds = SCENARIOS if ns.attack == "all" else (AttackKind.parse(ns.attack),)
    base = config_from_args(AttackSpec, ns, prefix="attack-", skip=("kind", "seed"))
    res = evaluate_scenarios(m, test, ns.seed, base, kinds)
    _write(ns.out_csv, metrics_csv(res))
    if ns.out_json:
        _write(ns.out_json, metrics_json(res) + "\n")
    for name, met in res.items():
        print(f"{name:12s} overall={met.overall_acc:.4f} inverter={met.inverter_acc:.4f} switch={met.switch_acc:.4f}")


def cmd_ablate(ns) -> None:
    ds = load_dataset(ns.data)
    splits = []
    for s in ns.seeds:
        train, test = split(ds, SplitSpec(ns.train_frac, ns.stratified, s))
        splits.append((train, test))
    report = None
    for s, pair in zip(ns.seeds, splits):
        report = run_ablation([pair], _train_cfg(ns, s), ns.variants, report=report)
    _write(ns.out, report.to_csv())
    print(report.to_csv(), end="")


def cmd_sweep(ns) -> None:
    grid = config_from_args(GridConfig, ns, skip=("window_len",))
    rows = sweep(ns.alphas, ns.lengths, grid, ns.n_total, ns.seed, _split_spec(ns),
                 _train_cfg(ns, ns.seed), ns.beta_fixed)
    _write(ns.out, rows_csv(rows))
    print(f"wrote {len(rows)} rows to {ns.out}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracdiag", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("generate", help="synthesise a labelled VPQ dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-total", type=int, default=5600)
    p.add_argument("--out", required=True, help="output stem; writes <stem>.json and <stem>.bin")
    add_config_args(p, GridConfig)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("extract", help="dataset windows -> feature CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--raw", action="store_true", help="statistics of raw V/P/Q instead of fractional channels")
    p.add_argument("--attack", default="none", choices=[k.name.lower() for k in AttackKind])
    add_config_args(p, AttackSpec, prefix="attack-", skip=("kind",))
    _add_frac(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="curriculum training -> model JSON + log CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--variant", default="full", choices=[v.value for v in Variant])
    p.add_argument("--val", action="store_true", help="log clean accuracy on the held-out split per epoch")
    _add_split(p)
    _add_frac(p)
    _add_train(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a model on the test split under attack")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--attack", default="all", choices=["all", *[k.name.lower() for k in AttackKind]])
    p.add_argument("--seed", type=int, default=0, help="attack realisation seed")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json")
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--split-seed", type=int, default=None, help="defaults to the split stored in the model")
    p.add_argument("--stratified", type=_parse_bool, default=True, metavar="{true,false}")
    add_config_args(p, AttackSpec, prefix="attack-", skip=("kind", "seed"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="Full / NoOhem / NoFracFeat over all scenarios")
    p.add_argument("--data", required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--variants", nargs="+", default=[v.value for v in Variant])
    p.add_argument("--out", required=True)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--stratified", type=_parse_bool, default=True, metavar="{true,false}")
    _add_train(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="clean accuracy over (alpha, window length)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-total", type=int, default=5600)
    p.add_argument("--alphas", type=float, nargs="+", default=list(DEFAULT_ALPHAS))
    p.add_argument("--lengths", type=int, nargs="+", default=list(DEFAULT_LENGTHS))
    p.add_argument("--beta-fixed", type=float, default=0.3)
    p.add_argument("--out", required=True)
    _add_split(p)
    add_config_args(p, GridConfig, skip=("window_len",))
    _add_train(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        ns.func(ns)
    except (ValueError, KeyError, OSError) as exc:
        print(f"fracdiag {ns.cmd}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
