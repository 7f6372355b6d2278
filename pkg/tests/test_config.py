import json
from pathlib import Path

import pytest

from radgraphgen.config import ConfigError, apply_overrides, config_from_dict, load_config, parse_value

REPO = Path(__file__).resolve().parents[1]


def test_defaults():
    cfg = config_from_dict({})
    assert cfg.mode == "prior" and cfg.training.mode == "prior"
    assert cfg.training.lr == 1e-4 and cfg.training.fg_bg_ratio == 3
    assert cfg.model.steps == cfg.training.steps == 2


def test_repo_default_config_loads():
    cfg = load_config(REPO / "configs" / "default.json")
    assert cfg.model.num_queries == 16 and cfg.model.num_classes == 12
    assert Path(cfg.paths.dataset).is_absolute()
    w = cfg.training.weights
    assert (w.entity_class, w.uncertainty, w.relation) == (1.0, 1.0, 3.0)


def test_all_unknown_keys_listed():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"bogus": 1, "model": {"x": 1}, "training": {"y": 2, "weights": {"z": 3}}, "paths": {"w": 0}})
    msgs = "\n".join(exc.value.errors)
    for key in ("bogus", "model.x", "training.y", "training.weights.z", "paths.w"):
        assert key in msgs


def test_conflicts():
    with pytest.raises(ConfigError, match="conflicts"):
        config_from_dict({"mode": "vanilla", "training": {"mode": "prior"}})
    with pytest.raises(ConfigError, match="steps"):
        config_from_dict({"model": {"steps": 3}, "training": {"steps": 2}})


def test_mode_propagates():
    cfg = config_from_dict({"mode": "prior_no_aecs", "model": {"steps": 1}})
    assert cfg.model.mode == cfg.training.mode == "prior_no_aecs"
    assert cfg.training.steps == 1
    assert not cfg.training.uses_aecs


def test_overrides():
    raw = apply_overrides({"model": {"d_model": 64}}, ["model.d_model=32", "mode=vanilla", "training.betas=[0.8,0.9]", "paths.dataset=x/y"])
    assert raw == {"model": {"d_model": 32}, "mode": "vanilla", "training": {"betas": [0.8, 0.9]}, "paths": {"dataset": "x/y"}}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["nonsense"])
    assert parse_value("1e-3") == 1e-3 and parse_value("abc") == "abc" and parse_value("null") is None


def test_invalid_values_reported():
    with pytest.raises(ConfigError, match="training"):
        config_from_dict({"training": {"batch_size": 0}})


def test_relative_paths_resolved(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"paths": {"dataset": "d", "checkpoint": "/abs/ck.json"}}))
    cfg = load_config(tmp_path / "c.json")
    assert cfg.paths.dataset == str(tmp_path / "d")
    assert cfg.paths.checkpoint == "/abs/ck.json"
