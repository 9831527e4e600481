import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from asvaet.autodiff import Tensor
from asvaet.cli import main
from asvaet.harness import training as training_mod


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["synthesize", "--out", str(data), "--labeled", "20", "--unlabeled", "20",
                 "--held-out", "12", "--dim", "8"]) == 0
    config = {
        "labeled_path": str(data / "labeled.jsonl"), "test_path": str(data / "held_out.jsonl"),
        "unlabeled_path": str(data / "unlabeled.jsonl"), "vectors_path": str(data / "vectors.txt"),
        "vectors_dim": 8, "d_model": 8, "n_layers": 1, "n_heads": 2, "z_dim": 3, "dropout": 0.0,
        "batch_labeled": 6, "batch_unlabeled": 6, "epochs": 1, "steps_per_epoch": 2,
        "classifier_options": {"hops": 1},
    }
    (root / "config.json").write_text(json.dumps(config))
    out = root / "run"
    assert main(["train", "--config", str(root / "config.json"), "--output-dir", str(out), "--seed", "1"]) == 0
    return root, data, out


def test_train_writes_artifacts(workspace):
    _, _, out = workspace
    for name in ("checkpoint.bin", "final.bin", "metrics.jsonl", "manifest.json"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 1 and manifest["overrides"]["seed"] == 1


def test_evaluate_prints_report(workspace, capsys):
    _, data, out = workspace
    capsys.readouterr()
    assert main(["evaluate", "--checkpoint", str(out / "checkpoint.bin"), "--data",
                 str(data / "held_out.jsonl")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n"] == 12 and 0 <= report["accuracy"] <= 1


def test_export_latent(workspace, tmp_path):
    _, data, out = workspace
    target = tmp_path / "z.csv"
    assert main(["export-latent", "--checkpoint", str(out / "checkpoint.bin"), "--data",
                 str(data / "unlabeled.jsonl"), "--out", str(target)]) == 0
    rows = list(csv.reader(open(target)))
    assert len(rows) == 21 and rows[0][-2:] == ["gold", "pred"] and len(rows[0]) == 5


def test_generate(workspace, capsys):
    _, _, out = workspace
    ckpt = str(out / "final.bin")
    capsys.readouterr()
    assert main(["generate", "--checkpoint", ckpt, "--aspect", "battery life", "--label", "positive",
                 "--n", "2", "--max-steps", "4", "--z", "0,0,0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2 and all("battery life" in x for x in lines)
    assert main(["generate", "--checkpoint", ckpt, "--aspect", "battery life", "--label", "neutral",
                 "--n", "0"]) == 0
    assert capsys.readouterr().out == ""
    assert main(["generate", "--checkpoint", ckpt, "--aspect", "x", "--label", "positive", "--z", "1,2"]) == 1


def test_stats(workspace, capsys):
    _, data, _ = workspace
    capsys.readouterr()
    assert main(["stats", "--data", str(data / "labeled.jsonl")]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["n"] == 20


def test_config_error_exit_code(tmp_path):
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mode": "asvaet", "labeled_path": "x"}))
    assert main(["train", "--config", str(bad)]) == 1


def test_data_error_exit_code(tmp_path, workspace):
    _, _, out = workspace
    broken = tmp_path / "broken.jsonl"
    broken.write_text("{not json\n")
    assert main(["evaluate", "--checkpoint", str(out / "checkpoint.bin"), "--data", str(broken)]) == 1
    assert main(["evaluate", "--checkpoint", str(broken), "--data", str(broken)]) == 1


def test_numerical_failure_exit_code(workspace, monkeypatch, tmp_path):
    root, _, _ = workspace
    real = training_mod.joint_objective

    def poisoned(*args, **kwargs):
        obj = real(*args, **kwargs)
        obj.J = Tensor(np.array(np.inf))
        return obj

    monkeypatch.setattr(training_mod, "joint_objective", poisoned)
    assert main(["train", "--config", str(root / "config.json"), "--output-dir", str(tmp_path / "r")]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "asvaet.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("train", "evaluate", "export-latent", "generate", "stats", "synthesize"):
        assert cmd in proc.stdout
