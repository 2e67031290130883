import logging
import sys
import time
from pathlib import Path

import rich_click as click

from gemmesh.config import RunConfig, load_run_config, parse_run_config
from gemmesh.constants import CHECKPOINT_NAME, HISTORY_NAME
from gemmesh.errors import ConfigInvalidError, GemMeshError, NonFiniteError
from gemmesh.geometry.io import sidecar_path
from gemmesh.nn.checkpoint import save_checkpoint
from gemmesh.nn.data import dataset_paths, load_dataset
from gemmesh.nn.model import build_model
from gemmesh.nn.train import train as fit
from gemmesh.synth.labels import label_path
from gemmesh.utils import resolve_seed, setup_logging, write_json, write_manifest, write_table

CONFIG_ECHO_NAME = "config.json"
HISTORY_COLUMNS = ["epoch", "split", "loss", "nmae", "eps"]


def apply_overrides(
    run: RunConfig, seed=None, epochs=None, augment_rotations=False, train_size=None
) -> RunConfig:
    """Fold command-line overrides into the run config and validate the result.

    A seed sets both the weight initialization and the split/shuffle seed.
    """
    data = run.model_dump(mode="json")
    if seed is not None:
        data["model"]["seed"] = seed
        data["train"]["seed"] = seed
    if epochs is not None:
        data["train"]["epochs"] = epochs
    if augment_rotations:
        data["train"]["augment_rotations"] = True
    if train_size is not None:
        data["train"]["train_size"] = train_size
    return parse_run_config(data)


def dataset_inputs(directory, target: str) -> list:
    """Every file a dataset is read from for `target`."""
    paths = []
    for obj in dataset_paths(directory):
        paths.extend([obj, sidecar_path(obj), label_path(obj, target)])
    return paths


@click.command()
@click.option(
    "--config",
    "-c",
    required=True,
    type=click.Path(dir_okay=False),
    help="JSON run configuration (model and training sections).",
)
@click.option(
    "--data",
    "-d",
    required=True,
    type=click.Path(exists=True, file_okay=False),
    help="Directory of labelled meshes written by gemmesh synth.",
)
@click.option(
    "--out",
    "-o",
    required=True,
    type=click.Path(file_okay=False),
    help="Directory to write the checkpoint and metric history to.",
)
@click.option(
    "--seed",
    "-s",
    type=int,
    help="Override the config seeds (initialization and split). $GEMMESH_SEED overrides.",
)
@click.option("--epochs", "-e", type=click.IntRange(min=0), help="Override train.epochs.")
@click.option(
    "--augment-rotations",
    is_flag=True,
    help="Rotate every training sample by a fresh random rotation each epoch.",
)
@click.option(
    "--train-size",
    type=click.IntRange(min=1),
    help="Keep only the first K samples of the training split.",
)
@click.option(
    "--jobs", "-j", default=1, show_default=True, type=click.IntRange(min=1), help="Processes."
)
@click.option("--silent", is_flag=True, help="Only critical errors will be printed.")
@click.option("--verbose", "-v", is_flag=True, help="Print debug related text.")
@click.help_option("--help", "-h")
def train(
    config,
    data,
    out,
    seed,
    epochs,
    augment_rotations,
    train_size,
    jobs,
    silent,
    verbose,
):
    """Train a mesh network on a labelled dataset."""
    setup_logging(silent, verbose)
    started = time.time()
    seed = resolve_seed(seed)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = outdir / CHECKPOINT_NAME

    try:
        run = apply_overrides(
            load_run_config(config), seed, epochs, augment_rotations, train_size
        )
        samples = load_dataset(data, run.model, jobs)
        if not samples:
            raise ConfigInvalidError(f"no meshes found in {data}")
        model = build_model(run.model)
        try:
            checkpoint = fit(model, samples, run)
        except NonFiniteError as e:
            if e.checkpoint is not None:
                logging.error(f"Saving the last good weights to {checkpoint_path}")
                save_checkpoint(e.checkpoint, checkpoint_path)
            raise
    except GemMeshError as e:
        logging.error(e)
        sys.exit(e.exit_code)

    logging.info(f"Writing checkpoint to {checkpoint_path}")
    save_checkpoint(checkpoint, checkpoint_path)
    history_path = outdir / HISTORY_NAME
    logging.info(f"Writing metric history to {history_path}")
    write_table(checkpoint.history, history_path, HISTORY_COLUMNS)
    config_path = outdir / CONFIG_ECHO_NAME
    write_json(run.model_dump(mode="json"), config_path)

    names = [s.name for s in samples]
    splits = {
        split: [names[i] for i in ids] for split, ids in checkpoint.extra["splits"].items()
    }
    splits["train_used"] = [names[i] for i in checkpoint.extra["train_ids"]]
    write_manifest(
        outdir,
        "train",
        run.train.seed,
        [config, *dataset_inputs(data, run.model.target)],
        [checkpoint_path, history_path, config_path],
        started,
        config=config,
        extra={
            "data": str(data),
            "splits": splits,
            "best_epoch": checkpoint.extra["best_epoch"],
            "epochs": run.train.epochs,
        },
    )
