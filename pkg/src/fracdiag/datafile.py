"""On-disk dataset format and feature CSV export.

A dataset is two files: ``<stem>.json`` holds the manifest and
``<stem>.bin`` holds every window as little-endian float64, ordered
window, then channel (V, P, Q), then sample.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .signalgen import Dataset, GridConfig, HierLabel, Window

FORMAT = "fracdiag-dataset/1"
CHANNELS = ("V", "P", "Q")


def _paths(stem) -> tuple[Path, Path]:
    stem = Path(stem)
    if stem.suffix in (".json", ".bin"):
        stem = stem.with_suffix("")
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def save_dataset(ds: Dataset, stem) -> tuple[Path, Path]:
    """Write manifest and payload; returns both paths."""
    meta_path, bin_path = _paths(stem)
    meta_path.parent.mkdir(parents=True, exist_ok=True)
    payload = ds.stacked().astype("<f8", copy=False)
    manifest = ds.manifest()
    manifest["format"] = FORMAT
    manifest["layout"] = {
        "payload": bin_path.name,
        "dtype": "float64",
        "byte_order": "little",
        "order": ["window", "channel", "sample"],
        "channels": list(CHANNELS),
        "n_windows": len(ds),
        "window_len": int(payload.shape[2]) if len(ds) else 0,
        "n_bytes": int(payload.nbytes),
    }
    bin_path.write_bytes(np.ascontiguousarray(payload).tobytes())
    meta_path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return meta_path, bin_path


def load_dataset(stem) -> Dataset:
    meta_path, _ = _paths(stem)
    manifest = json.loads(meta_path.read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{meta_path}: unsupported dataset format {manifest.get('format')!r}")
    lay = manifest["layout"]
    raw = (meta_path.parent / lay["payload"]).read_bytes()
    n, T = lay["n_windows"], lay["window_len"]
    if len(raw) != lay["n_bytes"] or len(raw) != n * len(CHANNELS) * T * 8:
        raise ValueError(f"{meta_path}: payload size does not match the manifest")
    data = np.frombuffer(raw, dtype="<f8").reshape(n, len(CHANNELS), T).astype(np.float64)
    cfg = GridConfig.from_dict(manifest["config"])
    if T != cfg.window_len:
        raise ValueError(f"{meta_path}: window_len disagrees with the config")
    windows = [
        Window(data[i].copy(), cfg.dt, HierLabel.from_flat(lab), seed)
        for i, (lab, seed) in enumerate(zip(manifest["labels"], manifest["seeds"]))
    ]
    return Dataset(windows, cfg, manifest["base_seed"], manifest["class_counts"])


def write_feature_csv(path, F: np.ndarray, labels, names) -> None:
    """One row per window: flat label then the named features (repr-formatted)."""
    F = np.atleast_2d(F)
    if F.shape[1] != len(names) or F.shape[0] != len(labels):
        raise ValueError("feature matrix does not match labels/names")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", *names])
        for lab, row in zip(labels, F):
            w.writerow([int(lab), *(repr(float(x)) for x in row)])


def read_feature_csv(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    labels = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
    F = np.array([[float(x) for x in r[1:]] for r in rows[1:]]).reshape(len(labels), len(names))
    return F, labels, names
