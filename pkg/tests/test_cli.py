import json

import numpy as np
import pytest

from fracdiag.cli import main
from fracdiag.datafile import load_dataset, read_feature_csv, save_dataset
from fracdiag.fracfeat import FracConfig, extract_features
from fracdiag.signalgen import GridConfig, generate_dataset

FAST = ["--epochs-per-stage", "1", "--steps-per-epoch", "2", "--batch", "32"]


def test_dataset_file_round_trip(tmp_path):
    ds = generate_dataset(GridConfig(), 50, 3)
    meta, payload = save_dataset(ds, tmp_path / "d")
    assert payload.stat().st_size == 50 * 3 * 400 * 8
    raw = np.frombuffer(payload.read_bytes(), dtype="<f8")
    # window-major, then V/P/Q, then samples
    assert raw[400] == ds.windows[0].p[0]
    assert raw[3 * 400] == ds.windows[1].v[0]
    manifest = json.loads(meta.read_text())
    assert manifest["labels"] == ds.labels.tolist()
    assert manifest["layout"]["byte_order"] == "little"
    back = load_dataset(tmp_path / "d.json")
    assert back.stacked().tobytes() == ds.stacked().tobytes()
    assert back.manifest() == ds.manifest()


def test_dataset_file_rejects_truncated_payload(tmp_path):
    _, payload = save_dataset(generate_dataset(GridConfig(), 25, 0), tmp_path / "d")
    payload.write_bytes(payload.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "d")


def test_generate_requires_seed(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--out", "x"])
    assert exc.value.code != 0
    assert "--seed" in capsys.readouterr().err


def test_pipeline_and_byte_identical_outputs(tmp_path):
    d = tmp_path / "ds"
    assert main(["generate", "--seed", "2", "--n-total", "100", "--out", str(d)]) == 0
    assert main(["extract", "--data", str(d), "--out", str(tmp_path / "f.csv")]) == 0
    F, labels, names = read_feature_csv(tmp_path / "f.csv")
    ds = load_dataset(d)
    assert np.array_equal(F, extract_features(ds.windows, FracConfig(dt=ds.cfg.dt)))
    assert labels.tolist() == ds.labels.tolist() and len(names) == 36

    outs = []
    for run in ("a", "b"):
        model = tmp_path / f"{run}.json"
        argv = ["train", "--data", str(d), "--seed", "5", "--out", str(model), "--val", *FAST]
        assert main(argv) == 0
        csv_path, json_path = tmp_path / f"{run}.csv", tmp_path / f"{run}.metrics.json"
        argv = ["eval", "--model", str(model), "--data", str(d), "--out-csv", str(csv_path), "--out-json", str(json_path)]
        assert main(argv) == 0
        outs.append([p.read_bytes() for p in (model, tmp_path / f"{run}.log.csv", csv_path, json_path)])
    assert outs[0] == outs[1]
    rows = outs[0][2].decode().splitlines()
    assert rows[0].startswith("scenario,overall_acc") and len(rows) == 6


def test_train_flags_reach_the_config(tmp_path):
    d = tmp_path / "ds"
    main(["generate", "--seed", "0", "--n-total", "50", "--out", str(d)])
    model = tmp_path / "m.json"
    argv = ["train", "--data", str(d), "--seed", "1", "--out", str(model), "--stages", "none", "bias",
            "--pgd-epsilon", "0.05", "--pgd-step-size", "0.01", "--grad-clip", "0", "--variant", "no_frac_feat",
            "--train-frac", "0.5", *FAST]
    assert main(argv) == 0
    meta = json.loads(model.read_text())["meta"]
    cfg = meta["train_config"]
    assert cfg["stages"] == ["NONE", "BIAS"] and cfg["pgd"]["epsilon"] == 0.05 and cfg["grad_clip"] == 0.0
    assert meta["variant"] == "no_frac_feat" and meta["split"]["train_frac"] == 0.5


def test_error_exit_codes(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "missing"), "--seed", "0", "--out", str(tmp_path / "m.json")]) != 0
    d = tmp_path / "ds"
    main(["generate", "--seed", "0", "--n-total", "25", "--out", str(d)])
    # one window per class cannot be split
    assert main(["train", "--data", str(d), "--seed", "0", "--out", str(tmp_path / "m.json")]) != 0
    assert main(["generate", "--seed", "0", "--n-total", "30", "--out", str(d)]) != 0
    assert main(["extract", "--data", str(d), "--out", str(tmp_path / "f.csv"), "--alpha", "1.5"]) != 0
    assert "error" in capsys.readouterr().err


def test_ablate_and_sweep_commands(tmp_path):
    d = tmp_path / "ds"
    main(["generate", "--seed", "0", "--n-total", "100", "--out", str(d)])
    out = tmp_path / "ab.csv"
    assert main(["ablate", "--data", str(d), "--seeds", "0", "--out", str(out), *FAST]) == 0
    assert len(out.read_text().splitlines()) == 4
    sw = tmp_path / "sw.csv"
    argv = ["sweep", "--n-total", "50", "--alphas", "0.5", "0.7", "--lengths", "100", "--train-frac", "0.5",
            "--stages", "none", "--out", str(sw), *FAST]
    assert main(argv) == 0
    assert len(sw.read_text().splitlines()) == 3
