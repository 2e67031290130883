import json

import pytest

from gemmesh.config import ModelConfig, load_run_config, parse_model_config, parse_run_config
from gemmesh.errors import ConfigInvalidError


def test_defaults():
    run = parse_run_config({"version": 1})
    assert run.model.conv_kind == "gem"
    assert run.model.levels == 3
    assert run.model.out_components == 3
    assert run.train.split == (0.8, 0.1, 0.1)
    assert run.train.learning_rate == 1e-3
    assert ModelConfig(target="pressure").out_components == 1


def test_full_scale_widths():
    config = ModelConfig.full_scale(conv_kind="isotropic")
    assert config.widths == [32, 48, 64]
    assert config.conv_kind == "isotropic"


@pytest.mark.parametrize(
    "data,message",
    [
        ({}, "version"),
        ({"version": 2}, "version"),
        ({"version": 1, "extra": 1}, "extra"),
        ({"version": 1, "model": {"conv_kind": "spline"}}, "model.conv_kind"),
        ({"version": 1, "model": {"levels": 4}}, "model.levels"),
        ({"version": 1, "model": {"widths": [4, 0, 4]}}, "positive"),
        ({"version": 1, "model": {"pool_ratios": [0.5, 0.25, 0.1]}}, "pool_ratios"),
        ({"version": 1, "model": {"radius_factors": [1.0, 1.0, 2.0]}}, "radius_factors"),
        ({"version": 1, "train": {"split": [0.5, 0.5, 0.5]}}, "split"),
        ({"version": 1, "train": {"batch_size": 0}}, "train.batch_size"),
    ],
)
def test_invalid_configs(data, message):
    with pytest.raises(ConfigInvalidError, match=message):
        parse_run_config(data)


def test_single_level_needs_one_entry():
    config = parse_model_config({"levels": 1, "widths": [4], "pool_ratios": [1.0]})
    assert config.widths == [4]
    with pytest.raises(ConfigInvalidError, match="widths needs at least 2 entries"):
        parse_model_config({"levels": 2, "widths": [4]})


def test_configs_are_frozen():
    config = ModelConfig()
    with pytest.raises(Exception):
        config.levels = 2
    assert parse_model_config(config) is config


def test_load_run_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"version": 1, "train": {"epochs": 5}}))
    assert load_run_config(path).train.epochs == 5
    path.write_text("{not json")
    with pytest.raises(ConfigInvalidError, match="cannot read config"):
        load_run_config(path)
    with pytest.raises(ConfigInvalidError, match="cannot read config"):
        load_run_config(tmp_path / "missing.json")


def test_round_trip_through_json():
    run = parse_run_config({"version": 1, "model": {"conv_kind": "attention", "time_steps": 4}})
    again = parse_run_config(json.loads(json.dumps(run.model_dump(mode="json"))))
    assert again == run
