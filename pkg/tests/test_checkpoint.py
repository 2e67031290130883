import json

import pytest
import torch

from gemmesh.config import ModelConfig, RunConfig
from gemmesh.errors import ConfigInvalidError
from gemmesh.nn.checkpoint import (
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from gemmesh.nn.model import build_model
from gemmesh.nn.train import restore_model


@pytest.fixture
def run():
    return RunConfig(version=1, model=ModelConfig(widths=[2, 2], levels=2, max_order=1))


@pytest.fixture
def checkpoint(run):
    model = build_model(run.model)
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)
    for param in model.parameters():
        param.grad = torch.ones_like(param)
    optimizer.step()
    return Checkpoint(
        config=run.model_dump(mode="json"),
        model_state=model.state_dict(),
        optimizer_state=optimizer.state_dict(),
        rng_state={"numpy": {"state": 7}},
        history=[{"epoch": 1, "split": "train", "loss": 0.5}],
        epoch=1,
        extra={"best_epoch": 1},
    )


def test_checkpoint_round_trip(tmp_path, checkpoint):
    path = save_checkpoint(checkpoint, tmp_path / "checkpoint.gem")
    loaded = load_checkpoint(path)
    assert loaded.config == checkpoint.config
    assert loaded.history == checkpoint.history
    assert loaded.epoch == 1
    assert loaded.extra == {"best_epoch": 1}
    assert loaded.rng_state == {"numpy": {"state": 7}}
    assert loaded.model_state.keys() == checkpoint.model_state.keys()
    for name, value in checkpoint.model_state.items():
        assert loaded.model_state[name].dtype == value.dtype, name
        assert torch.equal(loaded.model_state[name], value), name


def test_optimizer_state_survives(checkpoint):
    loaded = decode_checkpoint(encode_checkpoint(checkpoint))
    original = checkpoint.optimizer_state
    # Expected: param groups come back as JSON data (tuples become lists)
    groups = json.loads(json.dumps(original["param_groups"]))
    assert loaded.optimizer_state["param_groups"] == groups
    for pid, state in original["state"].items():
        for key, value in state.items():
            assert torch.equal(loaded.optimizer_state["state"][pid][key], value), (pid, key)


def test_encoding_is_deterministic(checkpoint):
    assert encode_checkpoint(checkpoint) == encode_checkpoint(checkpoint)


def test_restore_model(checkpoint, run):
    model, restored = restore_model(decode_checkpoint(encode_checkpoint(checkpoint)))
    assert restored == run
    for name, value in model.state_dict().items():
        assert torch.equal(value, checkpoint.model_state[name]), name


def test_bad_magic(checkpoint):
    data = encode_checkpoint(checkpoint)
    with pytest.raises(ConfigInvalidError, match="not a gemmesh checkpoint"):
        decode_checkpoint(b"PK" + data[2:])


def test_truncation(checkpoint):
    data = encode_checkpoint(checkpoint)
    with pytest.raises(ConfigInvalidError, match="inside its header"):
        decode_checkpoint(data[:12])
    with pytest.raises(ConfigInvalidError, match="inside its header"):
        decode_checkpoint(data[:40])
    with pytest.raises(ConfigInvalidError, match="inside array"):
        decode_checkpoint(data[:-8])


def test_unsupported_version(monkeypatch, checkpoint):
    with monkeypatch.context() as m:
        m.setattr("gemmesh.nn.checkpoint.CHECKPOINT_VERSION", 99)
        data = encode_checkpoint(checkpoint)
    with pytest.raises(ConfigInvalidError, match="unsupported checkpoint version 99"):
        decode_checkpoint(data)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigInvalidError, match="cannot read checkpoint"):
        load_checkpoint(tmp_path / "nothing.gem")


def test_weights_must_fit_config(checkpoint):
    checkpoint.config["model"]["widths"] = [3, 3]
    with pytest.raises(ConfigInvalidError, match="do not fit"):
        restore_model(checkpoint)
