import json
import os
import subprocess
import sys

import pytest

from mixlab import experiments as ex
from mixlab import vicinal as vic
from mixlab.cli import main

HERE = os.path.dirname(__file__)
DATA = os.path.join(HERE, "data")


def _config(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2) + "\n")
    return str(p)


TINY = {
    "experiment": "train",
    "dataset": {"kind": "two_moons", "n": 80},
    "model": {"hidden": [8]},
    "policy": {"kind": "mixup", "alpha": 1.0},
    "train": {"epochs": 1, "batch_size": 16},
    "output_dir": "out",
    "seeds": [0],
}


def test_run_writes_one_row_per_epoch(tmp_path, capsys):
    assert main(["run", _config(tmp_path, TINY)]) == 0
    out = tmp_path / "out"
    metrics = [f for f in os.listdir(out) if f.startswith("metrics_")]
    assert len(metrics) == 1
    raw = (out / metrics[0]).read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert lines[0] == "epoch,lr,train_error_real,train_error_corrupted,test_error,mean_train_loss"
    assert len(lines) == 2
    # no corrupted labels: that column is empty
    assert lines[1].split(",")[3] == ""
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete" and manifest["seeds"] == [0]
    assert "summary.csv" in manifest["artifacts"]
    assert "mixup" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    doc = dict(TINY, train={"epochs": 2, "batch_size": 16}, seeds=[3])
    doc["model"] = {"hidden": [8], "dropout_p": 0.2}
    a = ex.run_experiment(ex.parse_config(doc), output_dir=str(tmp_path / "a"))
    b = ex.run_experiment(ex.parse_config(doc), output_dir=str(tmp_path / "b"))
    assert len(a) == len(b)
    for name in os.listdir(tmp_path / "a"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_metrics_floats_round_trip(tmp_path):
    ex.run_experiment(ex.parse_config(TINY), output_dir=str(tmp_path))
    _, logs = ex.train_model(ex.parse_config(TINY), *ex.load_split(ex.parse_config(TINY), 0), vic.Mixup(1.0), 0)
    row = (tmp_path / "metrics_mixup_a_1_ac_rp_seed0.csv").read_text().splitlines()[1].split(",")
    assert float(row[5]) == logs[0].mean_train_loss


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", _config(tmp_path, TINY)]) == 0
    assert "ok" in capsys.readouterr().out


@pytest.mark.parametrize(
    "patch, key",
    [
        ({"experiment": "pretrain"}, "experiment"),
        ({"seeds": []}, "seeds"),
        ({"dataset": {"kind": "swiss_roll"}}, "kind"),
        ({"dataset": {"path": "missing.csv"}}, "path"),
        ({"train": {"optimizer": "lbfgs"}}, "train"),
        ({"colour": 1}, "colour"),
    ],
)
def test_validate_errors_point_at_lines(tmp_path, capsys, patch, key):
    path = _config(tmp_path, {**TINY, **patch})
    assert main(["validate", path]) != 0
    err = capsys.readouterr().err
    text = open(path).read().splitlines()
    line = next(i for i, l in enumerate(text, 1) if f'"{key}"' in l)
    assert f"{path}:{line}:" in err


def test_malformed_json_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "experiment": "train",\n  "seeds": [0,]\n}\n')
    assert main(["validate", str(p)]) == 2
    assert f"{p}:3:" in capsys.readouterr().err


def test_failed_run_is_flagged_partial(tmp_path):
    (tmp_path / "broken.csv").write_text("1,2,a\n3,x,b\n")
    doc = dict(TINY, dataset={"path": "broken.csv"})
    assert main(["run", _config(tmp_path, doc)]) != 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["partial"] is True
    assert "broken.csv" in manifest["error"]


def test_config_round_trip(tmp_path):
    cfg = ex.load_config(_config(tmp_path, TINY))
    again = ex.parse_config(json.loads(cfg.to_json()))
    assert again == cfg and again.to_json() == cfg.to_json()


def test_ablation_emits_one_row_per_policy(tmp_path):
    policies = [vic.policy_to_dict(p) for p in (vic.ERM(), vic.Mixup(1.0, mix_layer=1), vic.LabelSmoothing(0.1))]
    doc = dict(TINY, experiment="ablation_suite", policies=policies, seeds=[0])
    rows = ex.run_experiment(ex.parse_config(doc), output_dir=str(tmp_path))
    assert [r["policy"] for r in rows] == [vic.policy_label(vic.policy_from_dict(p)) for p in policies]


def test_default_ablation_grid_has_every_row():
    labels = [vic.policy_label(p) for p in ex.ablation_policies(2)]
    assert len(labels) == len(set(labels)) == 19


def test_compare_single_report_is_passthrough(capsys):
    header, rows, _, _ = ex.compare([os.path.join(DATA, "summary_seed0.csv")])
    _, original = ex.read_summary(os.path.join(DATA, "summary_seed0.csv"))
    assert sorted(map(tuple, (r.values() for r in rows))) == sorted(map(tuple, (r.values() for r in original)))


def test_compare_matches_golden(tmp_path):
    out = tmp_path / "cmp.csv"
    assert main(["compare", os.path.join(DATA, "summary_seed0.csv"), os.path.join(DATA, "summary_seed1.csv"), "--output", str(out)]) == 0
    with open(os.path.join(DATA, "compare_golden.csv")) as fh:
        assert out.read_text() == fh.read()


def test_compare_mean_is_arithmetic_mean():
    _, _, _, agg = ex.compare([os.path.join(DATA, "summary_seed0.csv"), os.path.join(DATA, "summary_seed1.csv")])
    erm = next(a for a in agg if a["policy"] == "ERM")
    assert float(erm["best_test_error_mean"]) == pytest.approx((25.30 + 22.10) / 2, abs=1e-9)


def test_compare_schema_mismatch(capsys):
    args = ["compare", os.path.join(DATA, "summary_seed0.csv"), os.path.join(DATA, "summary_adversarial.csv")]
    assert main(args) != 0
    assert "schema mismatch" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mixlab", "validate", _config(tmp_path, TINY)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_uci_suite_on_bundled_iris(tmp_path):
    doc = {
        "experiment": "uci_suite",
        "dataset": {"manifest": os.path.join(HERE, "..", "data", "uci", "manifest.json")},
        "model": {"hidden": [16]},
        "policy": {"kind": "mixup", "alpha": 0.4},
        "train": {"epochs": 1},
        "seeds": [0],
    }
    rows = ex.run_experiment(ex.parse_config(doc), output_dir=str(tmp_path))
    assert [(r["dataset"], r["policy"]) for r in rows] == [("iris", "ERM"), ("iris", "mixup(a=0.4,AC+RP)")]
