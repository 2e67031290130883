import logging
import sys
import time
from pathlib import Path

import numpy as np
import rich_click as click
from scipy.spatial.transform import Rotation

from gemmesh.cli.train import dataset_inputs
from gemmesh.errors import GemMeshError, ShapeMismatchError
from gemmesh.geometry.io import write_vtk
from gemmesh.nn.checkpoint import load_checkpoint
from gemmesh.nn.data import load_dataset, rotate_context
from gemmesh.nn.metrics import metrics
from gemmesh.nn.train import predict, restore_model, rotate_label
from gemmesh.utils import resolve_seed, setup_logging, write_json, write_manifest

METRICS_CSV = "metrics.csv"
METRICS_JSON = "metrics.json"
FIELDS_DIR = "fields"


def select_split(samples: list, checkpoint, split: str) -> list:
    """Samples of one recorded split, or all of them.

    Raises:
        ShapeMismatchError: The dataset is smaller than the one the checkpoint was trained on.
    """
    if split == "all":
        return list(samples)
    ids = checkpoint.extra.get("splits", {}).get(split, [])
    if ids and max(ids) >= len(samples):
        raise ShapeMismatchError(
            f"split {split} refers to sample {max(ids)}, the dataset has {len(samples)}"
        )
    return [samples[i] for i in ids]


def rotate_samples(samples: list, seed: int) -> tuple:
    """Rotate every sample by a seeded random rotation, drawn in sample order.

    Returns:
        tuple: (rotated contexts, rotated labels, (n, 3, 3) rotations)
    """
    rng = np.random.default_rng(seed)
    rotations = [Rotation.random(None, rng).as_matrix() for _ in samples]
    contexts = [rotate_context(s.context, r) for s, r in zip(samples, rotations)]
    labels = [rotate_label(s.label, r) for s, r in zip(samples, rotations)]
    return contexts, labels, np.asarray(rotations).reshape(-1, 3, 3)


def export_fields(path: Path, mesh, pred: np.ndarray, label: np.ndarray, target: str) -> None:
    """Write predicted and label fields of every time step as VTK point data."""
    steps = range(pred.shape[1])
    if target == "wss":
        vectors = {}
        for k in steps:
            vectors[f"wss_t{k}"] = pred[:, k]
            vectors[f"wss_label_t{k}"] = label[:, k]
        write_vtk(path, mesh, vectors=vectors)
    else:
        scalars = {}
        for k in steps:
            scalars[f"pressure_t{k}"] = pred[:, k, 0]
            scalars[f"pressure_label_t{k}"] = label[:, k, 0]
        write_vtk(path, mesh, scalars=scalars)


@click.command()
@click.option(
    "--checkpoint",
    "-c",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Checkpoint written by gemmesh train.",
)
@click.option(
    "--data",
    "-d",
    required=True,
    type=click.Path(exists=True, file_okay=False),
    help="Directory of labelled meshes.",
)
@click.option(
    "--out",
    "-o",
    required=True,
    type=click.Path(file_okay=False),
    help="Directory to write metric tables and field exports to.",
)
@click.option(
    "--rotate",
    default="none",
    show_default=True,
    type=click.Choice(["none", "random"], case_sensitive=False),
    help="Evaluate on randomly rotated copies of the samples.",
)
@click.option(
    "--split",
    default="all",
    show_default=True,
    type=click.Choice(["all", "train", "val", "test"], case_sensitive=False),
    help="Evaluate one split recorded in the checkpoint (same data directory) or every sample.",
)
@click.option(
    "--seed",
    "-s",
    default=0,
    show_default=True,
    type=int,
    help="Seed of the random rotations. $GEMMESH_SEED overrides.",
)
@click.option("--vtk", is_flag=True, help="Write predicted and label fields as VTK files.")
@click.option(
    "--jobs", "-j", default=1, show_default=True, type=click.IntRange(min=1), help="Processes."
)
@click.option("--silent", is_flag=True, help="Only critical errors will be printed.")
@click.option("--verbose", "-v", is_flag=True, help="Print debug related text.")
@click.help_option("--help", "-h")
def evaluate(
    checkpoint,
    data,
    out,
    rotate,
    split,
    seed,
    vtk,
    jobs,
    silent,
    verbose,
):
    """Evaluate a checkpoint and report error metrics."""
    setup_logging(silent, verbose)
    started = time.time()
    seed = resolve_seed(seed)
    rotate, split = rotate.lower(), split.lower()
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)

    try:
        stored = load_checkpoint(checkpoint)
        model, run = restore_model(stored)
        samples = select_split(load_dataset(data, run.model, jobs), stored, split)
        if not samples:
            raise ShapeMismatchError(f"no samples to evaluate in {data} (split {split})")
        logging.info(f"Evaluating {len(samples)} samples (split {split}, rotate {rotate})")

        contexts = [s.context for s in samples]
        labels = [s.label for s in samples]
        rotations = np.broadcast_to(np.eye(3), (len(samples), 3, 3))
        if rotate == "random":
            contexts, labels, rotations = rotate_samples(samples, seed)
        preds = predict(model, contexts, run.model, run.train.batch_size)
        table, summary = metrics(
            preds, labels, names=[s.name for s in samples], flows=[s.flow for s in samples]
        )
    except GemMeshError as e:
        logging.error(e)
        sys.exit(e.exit_code)

    csv_path, json_path = outdir / METRICS_CSV, outdir / METRICS_JSON
    logging.info(f"Writing per-sample metrics to {csv_path}")
    table.to_csv(csv_path, index=False)
    write_json(
        {
            "checkpoint": str(checkpoint),
            "conv_kind": run.model.conv_kind,
            "target": run.model.target,
            "rotate": rotate,
            "split": split,
            "summary": summary,
        },
        json_path,
    )
    logging.info(
        f"NMAE mean {summary['nmae']['mean']:.5f}, median {summary['nmae']['median']:.5f}; "
        f"eps mean {summary['eps']['mean']:.5f}"
    )

    outputs = [csv_path, json_path]
    if vtk:
        fields = outdir / FIELDS_DIR
        fields.mkdir(exist_ok=True)
        for sample, pred, label, rotation in zip(samples, preds, labels, rotations):
            path = fields / f"{sample.name}.vtk"
            mesh = sample.mesh.transformed(rotation) if rotate == "random" else sample.mesh
            export_fields(path, mesh, pred, label, run.model.target)
            outputs.append(path)
        logging.info(f"Wrote {len(samples)} field exports to {fields}")

    write_manifest(
        outdir,
        "eval",
        seed,
        [checkpoint, *dataset_inputs(data, run.model.target)],
        outputs,
        started,
        extra={"data": str(data), "rotate": rotate, "split": split},
    )
