import json
import logging

import pytest

from gemmesh.utils import (
    git_blob_hash,
    parse_flow_range,
    resolve_seed,
    run_parallel,
    write_json,
    write_manifest,
    write_table,
)


@pytest.fixture
def test_file(tmp_path):
    # Create a temporary file with known content
    test_file = tmp_path / "mesh.obj"
    with open(test_file, "wb") as f:
        f.write(b"v 0.0 0.0 0.0\n")
    return test_file


def square(x):
    return x * x


def test_git_blob_hash_valid_file(test_file):
    # Expected: `git hash-object mesh.obj`
    assert git_blob_hash(test_file) == "d1994b8bfd6c2429a31e5ea49e657d3bdd078f9d"


def test_git_blob_hash_empty_file(tmp_path):
    empty = tmp_path / "empty"
    empty.touch()
    # Expected: git's well-known empty blob id
    assert git_blob_hash(empty) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


def test_git_blob_hash_nonexistent_file():
    assert git_blob_hash("nonexistent.obj") is None


def test_resolve_seed(monkeypatch):
    monkeypatch.delenv("GEMMESH_SEED", raising=False)
    assert resolve_seed(3) == 3
    assert resolve_seed(None) is None
    monkeypatch.setenv("GEMMESH_SEED", "11")
    assert resolve_seed(3) == 11
    monkeypatch.setenv("GEMMESH_SEED", "")
    assert resolve_seed(3) == 3


def test_resolve_seed_rejects_garbage(monkeypatch, caplog):
    monkeypatch.setenv("GEMMESH_SEED", "abc")
    with pytest.raises(SystemExit) as error:
        resolve_seed(3)
    assert error.value.code == 1
    assert "not an integer seed" in caplog.text


def test_parse_flow_range():
    assert parse_flow_range("1.87,4.36") == (1.87, 4.36)
    assert parse_flow_range("2,2") == (2.0, 2.0)
    assert parse_flow_range("0.63,5.61") == (0.63, 5.61)


@pytest.mark.parametrize("value", ["0.5,2.0", "2.0,6.0", "3.0,2.0", "2.0", "a,b", "1,2,3"])
def test_parse_flow_range_errors(value, caplog):
    caplog.set_level(logging.ERROR)
    with pytest.raises(SystemExit) as error:
        parse_flow_range(value)
    assert error.value.code == 1
    assert value in caplog.text


def test_write_json(tmp_path):
    path = tmp_path / "out.json"
    write_json({"b": 1, "a": [1, 2]}, path)
    text = path.read_text()
    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [1, 2], "b": 1}


def test_write_table(tmp_path):
    path = tmp_path / "history.csv"
    frame = write_table([{"epoch": 1, "loss": 0.5}], path, ["epoch", "split", "loss"])
    assert list(frame.columns) == ["epoch", "split", "loss"]
    assert path.read_text().splitlines() == ["epoch,split,loss", "1,,0.5"]
    write_table([], path, ["epoch", "loss"])
    assert path.read_text().splitlines() == ["epoch,loss"]


@pytest.mark.parametrize("jobs", [1, 2])
def test_run_parallel_keeps_order(jobs):
    assert run_parallel(square, [3, 1, 2], jobs) == [9, 1, 4]
    assert run_parallel(square, [], jobs) == []


def test_write_manifest(tmp_path, test_file):
    outdir = tmp_path / "run"
    outdir.mkdir()
    output = outdir / "summary.json"
    write_json({}, output)
    path = write_manifest(
        outdir, "synth", 4, [test_file], [output], started=0.0, extra={"kind": "single"}
    )
    manifest = json.loads(path.read_text())
    assert path.name == "manifest.json"
    assert manifest["command"] == "synth"
    assert manifest["seed"] == 4
    assert manifest["kind"] == "single"
    assert manifest["config"] is None
    assert manifest["inputs"] == {str(test_file): git_blob_hash(test_file)}
    assert manifest["outputs"] == {"summary.json": git_blob_hash(output)}
