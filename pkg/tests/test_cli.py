import csv
import json

import numpy as np
import pytest

from conftest import quick_config
from ibm2.cli import main
from ibm2.features import import_csv, load_feature_file
from ibm2.report import dumps, read_report, strip_wall_clock


def write_config(path, **changes):
    path.write_text(json.dumps(quick_config(**changes).to_dict()))
    return path


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_synth_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--preset", "iso-easy", "--seed", "4", "--out", str(tmp_path / name), "--csv"]) == 0
    for f in ("train.feat", "test.feat", "train.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    train = load_feature_file(tmp_path / "a" / "train.feat")
    assert np.allclose(import_csv(tmp_path / "a" / "train.csv").features, train.features, atol=1e-6)


def test_import_csv(tmp_path):
    src = tmp_path / "x.csv"
    src.write_text("0,3.0,4.0\n1,0.0,2.0\n")
    assert main(["import", str(src), "--out", str(tmp_path / "x.feat"), "--normalize"]) == 0
    ds = load_feature_file(tmp_path / "x.feat")
    assert ds.normalized and ds.num_classes == 2
    assert np.allclose(ds.features, [[0.6, 0.8], [0.0, 1.0]])


def test_run_then_csv_report(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", mode="fsl", way=3, shots=[1], query=5, episodes=6, runs=1)
    out = tmp_path / "r.json"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    doc = read_report(out)
    assert len(doc["results"][0]["episodes"]) == 6
    assert main(["report", str(out), "--format", "csv"]) == 0
    lines = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert lines[0][0] == "shots" and len(lines) == 1 + 6
    assert main(["report", str(out)]) == 0
    assert "acc_10" in capsys.readouterr().out


def test_run_overrides_from_flags(tmp_path):
    cfg = write_config(tmp_path / "cfg.json")
    out = tmp_path / "r.json"
    argv = ["run", "--config", str(cfg), "--seed", "3", "--method", "baseline", "--shots", "1",
            "--runs", "1", "--lr", "0.05", "--out", str(out)]
    assert main(argv) == 0
    doc = read_report(out)
    assert doc["master_seed"] == 3 and doc["config"]["method"] == "baseline"
    assert doc["results"][0]["tasks"][0]["lr"] == 0.05


def test_run_twice_identical_and_thread_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "cfg.json", runs=1)
    outs = [tmp_path / "a.json", tmp_path / "b.json"]
    assert main(["run", "--config", str(cfg), "--out", str(outs[0])]) == 0
    monkeypatch.setenv("IBM2_THREADS", "2")
    assert main(["run", "--config", str(cfg), "--out", str(outs[1])]) == 0
    a, b = (dumps(strip_wall_clock(read_report(p))) for p in outs)
    assert a == b


def test_ablations(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", runs=1, shots=[1])
    out = tmp_path / "r.json"
    assert main(["ablate-r", "--config", str(cfg), "--values", "1,5", "--out", str(out)]) == 0
    doc = read_report(out)
    assert doc["ablation"] == "R" and [e["value"] for e in doc["reports"]] == [1, 5]
    assert main(["ablate-sampling", "--config", str(cfg), "--out", str(out)]) == 0
    doc = read_report(out)
    assert [e["value"] for e in doc["reports"]] == ["baseline", "spherical", "ellipsoidal"]
    assert main(["report", str(out), "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("variant,") and len(lines) == 1 + 3


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["run", "--r", "many"], ["report"]])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert error_of(capsys)["error"] == "usage"


def test_malformed_config_exit_3(tmp_path, capsys):
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"R": 0}))
    assert main(["run", "--config", str(bad)]) == 3
    assert error_of(capsys)["error"] == "malformed_config"
    garbage = tmp_path / "x.feat"
    garbage.write_bytes(b"NOTMAGIC" + bytes(40))
    assert main(["run", "--pool", str(garbage), "--mode", "fsl"]) == 3


def test_missing_file_exit_4(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 4
    err = error_of(capsys)
    assert err["error"] == "missing_file" and "nope.json" in err["message"]
    assert main(["import", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o.feat")]) == 4
