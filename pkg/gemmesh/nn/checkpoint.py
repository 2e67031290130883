"""Single-file checkpoints: a JSON header followed by little-endian float64 arrays.

Layout::

    magic (8 bytes) | header length (uint64 LE) | UTF-8 JSON header | array data

Every tensor is stored as '<f8' and cast back to its recorded dtype on load, which
is exact for the float32/float64/int64 values a training run produces.
"""
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from gemmesh.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from gemmesh.errors import ConfigInvalidError

PathLike = Union[str, Path]
HEADER_LENGTH = struct.Struct("<Q")
DTYPES = {
    str(dtype): dtype
    for dtype in (torch.float64, torch.float32, torch.int64, torch.int32, torch.bool, torch.uint8)
}


@dataclass
class Checkpoint:
    """Everything needed to resume or evaluate a run.

    Attributes:
        config (dict): The validated run configuration, as JSON data.
        model_state (dict): Layer path to tensor.
        optimizer_state (dict, optional): torch optimizer state_dict.
        rng_state (dict): Generator states of the training loop.
        history (list): Metric history rows (epoch, split, loss, nmae, eps).
        epoch (int): Epochs completed when the weights were taken.
        extra (dict): Split membership, best epoch and similar run facts.
    """

    config: dict
    model_state: dict
    optimizer_state: Optional[dict] = None
    rng_state: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    epoch: int = 0
    extra: dict = field(default_factory=dict)


def _flatten_optimizer(state: dict) -> tuple:
    tensors, scalars = {}, {}
    for pid, values in state["state"].items():
        for key, value in values.items():
            if torch.is_tensor(value):
                tensors[f"optimizer/{pid}/{key}"] = value
            else:
                scalars[f"{pid}/{key}"] = value
    return tensors, {"param_groups": state["param_groups"], "scalars": scalars}


def _unflatten_optimizer(tensors: dict, meta: dict) -> dict:
    state = {}
    for name, value in tensors.items():
        _, pid, key = name.split("/", 2)
        state.setdefault(int(pid), {})[key] = value
    for name, value in meta["scalars"].items():
        pid, key = name.split("/", 1)
        state.setdefault(int(pid), {})[key] = value
    return {"state": state, "param_groups": meta["param_groups"]}


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    """Serialize a checkpoint to bytes."""
    tensors = {f"model/{name}": value for name, value in checkpoint.model_state.items()}
    optimizer_meta = None
    if checkpoint.optimizer_state is not None:
        optimizer_tensors, optimizer_meta = _flatten_optimizer(checkpoint.optimizer_state)
        tensors.update(optimizer_tensors)

    arrays, blobs, offset = [], [], 0
    for name, tensor in tensors.items():
        tensor = tensor.detach().cpu()
        data = tensor.to(torch.float64).numpy().astype("<f8").tobytes()
        arrays.append(
            {
                "name": name,
                "dtype": str(tensor.dtype),
                "shape": list(tensor.shape),
                "offset": offset,
            }
        )
        blobs.append(data)
        offset += len(data)

    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": checkpoint.config,
        "epoch": checkpoint.epoch,
        "history": checkpoint.history,
        "rng_state": checkpoint.rng_state,
        "extra": checkpoint.extra,
        "optimizer": optimizer_meta,
        "arrays": arrays,
    }
    raw = json.dumps(header, sort_keys=True).encode()
    return CHECKPOINT_MAGIC + HEADER_LENGTH.pack(len(raw)) + raw + b"".join(blobs)


def decode_checkpoint(data: bytes) -> Checkpoint:
    """Parse bytes written by encode_checkpoint.

    Raises:
        ConfigInvalidError: Wrong magic, truncated data or an unsupported version.
    """
    magic_size = len(CHECKPOINT_MAGIC)
    if data[:magic_size] != CHECKPOINT_MAGIC:
        raise ConfigInvalidError("not a gemmesh checkpoint")
    start = magic_size + HEADER_LENGTH.size
    if len(data) < start:
        raise ConfigInvalidError("checkpoint truncated inside its header")
    (length,) = HEADER_LENGTH.unpack(data[magic_size:start])
    if len(data) < start + length:
        raise ConfigInvalidError("checkpoint truncated inside its header")
    try:
        header = json.loads(data[start : start + length].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigInvalidError(f"checkpoint header is not valid JSON: {e}") from e
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigInvalidError(f"unsupported checkpoint version {header.get('format_version')}")
    body = memoryview(data)[start + length :]

    tensors = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = entry["offset"] + 8 * count
        if end > len(body):
            raise ConfigInvalidError(f"checkpoint truncated inside array {entry['name']}")
        values = np.frombuffer(body[entry["offset"] : end], dtype="<f8").reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(values.copy()).to(DTYPES[entry["dtype"]])

    model_state = {k[len("model/") :]: v for k, v in tensors.items() if k.startswith("model/")}
    optimizer_state = None
    if header["optimizer"] is not None:
        optimizer_tensors = {k: v for k, v in tensors.items() if k.startswith("optimizer/")}
        optimizer_state = _unflatten_optimizer(optimizer_tensors, header["optimizer"])
    return Checkpoint(
        config=header["config"],
        model_state=model_state,
        optimizer_state=optimizer_state,
        rng_state=header["rng_state"],
        history=header["history"],
        epoch=header["epoch"],
        extra=header["extra"],
    )


def save_checkpoint(checkpoint: Checkpoint, path: PathLike) -> Path:
    path = Path(path)
    path.write_bytes(encode_checkpoint(checkpoint))
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ConfigInvalidError(f"cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(data)
