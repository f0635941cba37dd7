import json

import pytest

from ibm2.config import (
    FSL_LR_GRID,
    PFSL_LR_GRID,
    ConfigError,
    RunConfig,
    config_from_dict,
    load_config,
)


def test_mode_defaults():
    p = RunConfig().resolved()
    assert (p.t_init, p.runs, p.trainer.epochs, p.search.epochs) == (0.9, 3, 100, 20)
    assert p.lr.candidates == list(PFSL_LR_GRID)
    f = RunConfig(mode="fsl").resolved()
    assert (f.t_init, f.runs, f.trainer.epochs, f.search.epochs) == (0.999, 5, 200, 50)
    assert f.shots == [1, 5] and f.query == 15
    assert f.lr.candidates == list(FSL_LR_GRID)


def test_default_lrs():
    cfg = RunConfig()
    assert cfg.default_lr("ibm2") == 1.0 and cfg.default_lr("baseline") == 0.005
    fixed = config_from_dict({"lr": {"value": 0.3}})
    assert fixed.default_lr() == 0.3 and fixed.default_lr("baseline") == 0.005


def test_resolved_keeps_explicit_values():
    cfg = config_from_dict({"t_init": 0.8, "runs": 7, "trainer": {"epochs": 3}}).resolved()
    assert (cfg.t_init, cfg.runs, cfg.trainer.epochs) == (0.8, 7, 3)
    assert cfg.search.batch_size == cfg.trainer.batch_size


def test_search_config_mapping():
    cfg = config_from_dict({"R": 17, "search": {"right_init": 4.0, "warm_start": False}})
    s = cfg.search_config(9)
    assert (s.replicas, s.right_init, s.warm_start, s.seed, s.threshold) == (17, 4.0, False, 9, 0.9)


def test_dict_round_trip():
    cfg = config_from_dict({"mode": "fsl", "shots": [1], "lr": {"policy": "grid"}})
    assert config_from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"trainer": {"lrate": 1}},
    {"mode": "zero-shot"},
    {"method": "svm"},
    {"sampling": "cubic"},
    {"R": 0},
    {"R": "200"},
    {"shots": []},
    {"seed": -1},
    {"config_version": 2},
    {"lr": {"policy": "random"}},
    {"lr": 5},
    {"data": {"pool": "a.feat"}},
    {"search": {"tol": 0}},
    {"search": {"right_init": 0.01}},
])
def test_rejects_bad_configs(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_load_config_resolves_relative_paths(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"data": {"pool": "train.feat", "test": "sub/test.feat"}}))
    cfg = load_config(path)
    assert cfg.data["pool"] == str(tmp_path / "train.feat")
    assert cfg.data["test"] == str(tmp_path / "sub" / "test.feat")


def test_load_config_bad_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
