import pytest

from vqcomm.config import (
    ExperimentConfig,
    config_from_dict,
    load_config,
    merge_overrides,
    parse_assignments,
)
from vqcomm.models.common import ConfigError


def test_defaults_everywhere():
    cfg = ExperimentConfig()
    assert cfg.kind == "adding"
    assert cfg.quantizer.beta == 0.25
    assert cfg.training.optimizer == "adam"


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_dict({"kind": "adding", "bogus": 1})


def test_unknown_section_key_rejected():
    with pytest.raises(ConfigError, match="quantizer.bogus"):
        config_from_dict({"quantizer": {"bogus": 1}})


def test_unknown_kind_rejected():
    with pytest.raises(ConfigError, match="kind"):
        config_from_dict({"kind": "frobnicate"})


def test_type_coercion_from_strings():
    cfg = config_from_dict(
        {
            "seed": "7",
            "quantizer": {"discretize": "true", "L": "32", "beta": "0.5"},
            "task": {"ood_objects": "3,2"},
        }
    )
    assert cfg.seed == 7
    assert cfg.quantizer.discretize is True
    assert cfg.quantizer.L == 32
    assert cfg.quantizer.beta == 0.5
    assert cfg.task.ood_objects == (3, 2)


def test_bad_values_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"quantizer": {"discretize": "maybe"}})
    with pytest.raises(ConfigError):
        config_from_dict({"quantizer": {"L": "many"}})


def test_parse_assignments_nesting():
    nested = parse_assignments(["seed=3", "quantizer.L=16", "training.lr=0.001"])
    assert nested == {"seed": "3", "quantizer": {"L": "16"}, "training": {"lr": "0.001"}}
    with pytest.raises(ConfigError):
        parse_assignments(["a.b.c=1"])
    with pytest.raises(ConfigError):
        parse_assignments(["novalue"])


def test_load_config_keyvalue_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        """
# adding-task experiment
kind=adding
seed=5
quantizer.discretize=true   # turn on the bottleneck
quantizer.L=8
training.epochs=3
"""
    )
    cfg = load_config(path)
    assert cfg.kind == "adding"
    assert cfg.seed == 5
    assert cfg.quantizer.L == 8
    assert cfg.training.epochs == 3


def test_load_config_json_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text('{"kind": "bounds", "seed": 2, "quantizer": {"G": 15, "L": 30}}')
    cfg = load_config(path)
    assert cfg.kind == "bounds"
    assert cfg.quantizer.G == 15


def test_config_snapshot_roundtrip():
    cfg = config_from_dict({"kind": "gridworld", "seed": 9, "quantizer": {"discretize": True, "G": 2}})
    again = config_from_dict(cfg.to_dict())
    assert again == cfg


def test_merge_overrides():
    base = {"kind": "adding", "quantizer": {"L": 8}}
    merged = merge_overrides(base, {"quantizer": {"G": 2}, "seed": 4})
    assert merged == {"kind": "adding", "quantizer": {"L": 8, "G": 2}, "seed": 4}
