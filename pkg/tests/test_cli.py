import csv
import json

import pytest

from s2pnilm.cli import main

ARCH = [
    {"kind": "conv1d", "filters": 4, "kernel_length": 5},
    {"kind": "relu"},
    {"kind": "flatten"},
    {"kind": "dense", "units": 1},
]
FAST = ["--window", "15", "--max-epochs", "2", "--min-epochs", "1", "--batch-size", "64"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    synth = {"length": 800, "noise_std": 10.0, "appliances": [
        {"name": "kettle", "on_power": 1500.0, "mean_on_duration": 10, "duty_cycle": 0.2},
        {"name": "fridge", "on_power": 120.0, "mean_on_duration": 40, "duty_cycle": 0.4}]}
    (root / "synth.json").write_text(json.dumps(synth))
    houses = {}
    for h in (1, 2, 3):
        out = root / f"house{h}.csv"
        assert main(["synth", "--config", str(root / "synth.json"), "--seed", str(h), "--out", str(out)]) == 0
        houses[str(h)] = out.name
    split = {"train": [1], "validation": [2], "test": [3]}
    (root / "dataset.json").write_text(json.dumps({
        "houses": houses,
        "layout": {"timestamp": "timestamp", "power": ["mains", "kettle", "fridge"]},
        "splits": {"kettle": split, "fridge": split},
    }))
    (root / "arch.json").write_text(json.dumps(ARCH))
    return root


def test_synth_csv(workspace):
    table = rows(workspace / "house1.csv")
    assert table[0] == ["timestamp", "mains", "kettle", "fridge"]
    assert len(table) == 801
    assert table[2][0] == "8"


def test_train_predict_evaluate(workspace):
    ck = workspace / "kettle_ck"
    hist = workspace / "hist.csv"
    code = main(["train", "--dataset", str(workspace / "dataset.json"), "--appliance", "kettle",
                 "--out", str(ck), "--arch", str(workspace / "arch.json"), "--history", str(hist), *FAST])
    assert code == 0
    assert (ck / "manifest.json").exists()
    assert rows(hist)[0] == ["epoch", "train_loss", "val_loss"]

    pred = workspace / "pred.csv"
    assert main(["predict", "--checkpoint", str(ck), "--mains", str(workspace / "house3.csv"),
                 "--out", str(pred)]) == 0
    table = rows(pred)
    assert table[0] == ["timestamp", "watts"] and len(table) == 801

    report = workspace / "report.csv"
    share = workspace / "share.csv"
    assert main(["evaluate", "--checkpoint", str(ck), "--dataset", str(workspace / "dataset.json"),
                 "--out", str(report), "--energy-share", str(share)]) == 0
    table = rows(report)
    assert table[0] == ["appliance", "MAE", "SAE", "EpD", "NDE"]
    assert table[1][0] == "kettle"
    # 800 samples at 8 s span no complete UTC day
    assert table[1][3] == "invalid"
    assert rows(share)[1][0] == "kettle"


def test_transfer_and_features(workspace):
    ds = str(workspace / "dataset.json")
    ck = workspace / "src_ck"
    assert main(["train", "--dataset", ds, "--appliance", "kettle", "--out", str(ck),
                 "--arch", str(workspace / "arch.json"), *FAST]) == 0
    assert main(["transfer", "atl", "--source", str(ck), "--dataset", ds, "--appliance", "fridge",
                 "--out", str(workspace / "atl_ck"), *FAST]) == 0
    man = json.loads((workspace / "atl_ck" / "manifest.json").read_text())
    assert man["appliance"] == "fridge"
    assert man["layers"][0]["trainable"] is False

    assert main(["transfer", "ctl", "--source", str(ck), "--dataset", ds,
                 "--out", str(workspace / "ctl.csv")]) == 0
    assert main(["transfer", "ctl", "--source", str(ck), "--dataset", ds, "--finetune",
                 "--subset-fraction", "0.5", "--out", str(workspace / "ctl_ft.csv"),
                 "--out-checkpoint", str(workspace / "ft_ck"), *FAST]) == 0
    assert (workspace / "ft_ck" / "manifest.json").exists()

    feats = workspace / "feats.csv"
    assert main(["features", "--checkpoint", str(ck), "--mains", str(workspace / "house3.csv"),
                 "--start", "10", "--stop", "12", "--out", str(feats)]) == 0
    table = rows(feats)
    assert table[0] == ["window", "timestamp", "position", "ch0", "ch1", "ch2", "ch3"]
    assert len(table) == 1 + 2 * 15
    assert table[1][:3] == ["10", "80", "0"]


def test_evaluate_is_byte_deterministic(workspace):
    ds = str(workspace / "dataset.json")
    outs = []
    for tag in ("a", "b"):
        ck = workspace / f"det_{tag}"
        assert main(["train", "--dataset", ds, "--appliance", "kettle", "--out", str(ck),
                     "--arch", str(workspace / "arch.json"), "--seed", "3", *FAST]) == 0
        rep = workspace / f"det_{tag}.csv"
        assert main(["evaluate", "--checkpoint", str(ck), "--dataset", ds, "--out", str(rep)]) == 0
        outs.append(rep.read_bytes())
    assert outs[0] == outs[1]


def test_exit_codes(workspace, tmp_path, capsys):
    ds = str(workspace / "dataset.json")
    assert main(["predict", "--checkpoint", str(tmp_path / "none"), "--mains",
                 str(workspace / "house1.csv"), "--out", str(tmp_path / "p.csv")]) == 4
    assert main(["train", "--dataset", ds, "--appliance", "toaster", "--out", str(tmp_path / "x")]) == 2
    (tmp_path / "bad.json").write_text("{")
    assert main(["train", "--dataset", str(tmp_path / "bad.json"), "--appliance", "kettle",
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["predict", "--checkpoint", str(workspace / "kettle_ck"), "--mains",
                 str(workspace / "house1.csv"), "--mains-col", "aggregate",
                 "--out", str(tmp_path / "p.csv")]) == 2
    (tmp_path / "empty.csv").write_text("timestamp,mains\n")
    assert main(["predict", "--checkpoint", str(workspace / "kettle_ck"), "--mains",
                 str(tmp_path / "empty.csv"), "--out", str(tmp_path / "p.csv")]) == 3
    assert main(["features", "--checkpoint", str(workspace / "kettle_ck"), "--mains",
                 str(workspace / "house1.csv"), "--segment", "4", "--out", str(tmp_path / "f.csv")]) == 3
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "s2pnilm", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("train", "predict", "evaluate", "transfer", "features", "synth"):
        assert cmd in out.stdout
