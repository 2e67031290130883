import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import pandas as pd
import rich
from rich.logging import RichHandler

import gemmesh
from gemmesh.constants import FLOW_LIMITS, MANIFEST_NAME, SEED_ENV

PathLike = Union[str, Path]


def setup_logging(silent: bool = False, verbose: bool = False) -> None:
    """Send log records to stderr through rich.

    Args:
        silent (bool, optional): Only report errors. Defaults to False.
        verbose (bool, optional): Report debug messages. Defaults to False.
    """
    logging.basicConfig(
        format="%(asctime)s:%(name)s:%(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[
            RichHandler(rich_tracebacks=True, console=rich.console.Console(stderr=True))
        ],
    )
    logging.getLogger().setLevel(
        logging.ERROR if silent else logging.DEBUG if verbose else logging.INFO
    )


def git_blob_hash(path: PathLike) -> Optional[str]:
    """Calculate the git-style SHA-1 of a file ("blob <size>\\0" + content).

    Args:
        path (str): File to hash.

    Returns:
        str: Hex digest, or None when the file does not exist.
    """
    path = Path(path)
    megabyte = 1_048_576
    buffer_size = 10 * megabyte
    if path.is_file():
        digest = hashlib.sha1(f"blob {path.stat().st_size}\0".encode())
        with open(path, "rb") as fp:
            for chunk in iter(lambda: fp.read(buffer_size), b""):
                digest.update(chunk)

        return digest.hexdigest()
    else:
        return None


def write_json(data: dict, output: PathLike) -> None:
    """Write `data` as indented JSON with sorted keys and a trailing newline."""
    with open(output, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(rows: list, output: PathLike, columns: Optional[list] = None) -> pd.DataFrame:
    """Write a list of row dicts as CSV and return the frame."""
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(output, index=False)
    return frame


def resolve_seed(seed: Optional[int]) -> Optional[int]:
    """The seed to use: $GEMMESH_SEED when set, otherwise `seed`."""
    value = os.environ.get(SEED_ENV)
    if value is None or value == "":
        return seed
    try:
        override = int(value)
    except ValueError:
        logging.error(f"{SEED_ENV}={value} is not an integer seed")
        sys.exit(1)
    if override != seed:
        logging.info(f"Using seed {override} from {SEED_ENV} instead of {seed}")
    return override


def parse_flow_range(value: str) -> tuple:
    """
    Parse an inlet flow range "low,high" in ml/s. Both bounds must lie in the
    supported range and low must not exceed high.

    Parameters:
        value (str): Comma-separated bounds.

    Returns:
        tuple: (low, high) as floats.
    """
    low_limit, high_limit = FLOW_LIMITS
    try:
        low, high = (float(part) for part in value.split(","))
    except ValueError:
        logging.error(f"{value} is not a flow range, expected two numbers such as 1.87,4.36")
        sys.exit(1)
    if not low_limit <= low <= high <= high_limit:
        logging.error(
            f"Flow range {value} must satisfy {low_limit} <= low <= high <= {high_limit} ml/s"
        )
        sys.exit(1)
    return low, high


def run_parallel(function: Callable, items: Iterable, jobs: int = 1) -> list:
    """Map `function` over `items`, in input order, on up to `jobs` processes."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(function, items))


def _relative(path: PathLike, root: Path) -> str:
    path = Path(path)
    return str(path.relative_to(root)) if path.is_relative_to(root) else str(path)


def write_manifest(
    outdir: PathLike,
    command: str,
    seed: Optional[int],
    inputs: Iterable[PathLike],
    outputs: Iterable[PathLike],
    started: float,
    config: Optional[PathLike] = None,
    extra: Optional[dict] = None,
) -> Path:
    """Record a command run with content hashes of everything it read and wrote.

    Args:
        outdir (str): Directory receiving manifest.json.
        command (str): Subcommand name.
        seed (int): Resolved seed, if the command uses one.
        inputs (list): Files read.
        outputs (list): Files written.
        started (float): time.time() at command start.
        config (str, optional): Config file path.
        extra (dict, optional): Command-specific fields.

    Returns:
        Path: The manifest path.
    """
    outdir = Path(outdir)
    manifest = {
        "command": command,
        "version": gemmesh.__version__,
        "config": None if config is None else str(config),
        "seed": seed,
        "inputs": {str(p): git_blob_hash(p) for p in sorted(map(str, inputs))},
        "outputs": {_relative(p, outdir): git_blob_hash(p) for p in sorted(map(str, outputs))},
        "duration_s": round(time.time() - started, 3),
    }
    manifest.update(extra or {})
    path = outdir / MANIFEST_NAME
    write_json(manifest, path)
    logging.info(f"Writing run manifest to {path}")
    return path
