from pathlib import Path

import pytest

from errors import ConfigError
from sim_config import (SimConfig, TrainingConfig, config_hash, config_to_dict,
                        load_sim_config, parse_sim_config)

DEFAULT_YAML = Path(__file__).resolve().parent.parent / "configs" / "default_sim.yaml"


def test_empty_document_takes_defaults():
    assert parse_sim_config(None) == SimConfig()
    assert parse_sim_config({}) == SimConfig()


def test_shipped_config_matches_defaults():
    assert load_sim_config(DEFAULT_YAML) == SimConfig()


def test_partial_sections_keep_other_defaults():
    sim = parse_sim_config({"cycles": 2, "training": {"epochs": 10, "rank_weight": 2}})
    assert sim.cycles == 2
    assert sim.training == TrainingConfig(epochs=10, rank_weight=2.0)
    assert isinstance(sim.training.rank_weight, float)
    assert sim.model == SimConfig().model


@pytest.mark.parametrize("document,path", [
    ({"training": {"step": -0.1}}, "training.step"),
    ({"training": {"backflow": 1.5}}, "training.backflow"),
    ({"training": {"epochs": 2.5}}, "training.epochs"),
    ({"model": {"hidden": 0}}, "model.hidden"),
    ({"task": {"target": "cubic"}}, "task.target"),
    ({"strategies": ["random", "bald"]}, "strategies[1]"),
    ({"strategies": ["llpp", "llpp"]}, "strategies"),
    ({"batch": True}, "batch"),
    ({"init_labeled": 600, "pool_size": 500}, "init_labeled"),
    ({"task": [1, 2]}, "task"),
])
def test_invalid_fields_name_their_path(document, path):
    with pytest.raises(ConfigError) as excinfo:
        parse_sim_config(document)
    assert excinfo.value.field == path
    assert str(excinfo.value).startswith(f"{path}:")


def test_unknown_fields_are_rejected():
    with pytest.raises(ConfigError, match="^training.learning_rate: unknown field"):
        parse_sim_config({"training": {"learning_rate": 0.1}})
    with pytest.raises(ConfigError, match="^epochs: unknown field"):
        parse_sim_config({"epochs": 3})


def test_hash_is_stable_and_sensitive():
    sim = SimConfig()
    assert config_hash(sim) == config_hash(parse_sim_config({}))
    assert len(config_hash(sim)) == 64
    assert config_hash(parse_sim_config({"seed": 1})) != config_hash(sim)


def test_dict_form_is_json_friendly():
    document = config_to_dict(SimConfig())
    assert document["strategies"] == ["random", "hinge_ll", "llpp"]
    assert document["training"]["epochs"] == 500
    assert parse_sim_config(document) == SimConfig()


def test_loading_yaml(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("seed: 7\nstrategies: [random, llpp]\ntask:\n  noise_high: 0.5\n", encoding="utf-8")
    sim = load_sim_config(path)
    assert sim.seed == 7
    assert sim.strategies == ("random", "llpp")
    assert sim.task.noise_high == 0.5


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="^config: cannot read"):
        load_sim_config(tmp_path / "missing.yaml")
    broken = tmp_path / "broken.yaml"
    broken.write_text("seed: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="^config: invalid YAML"):
        load_sim_config(broken)
