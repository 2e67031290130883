import json
import logging
import sys
import time
from pathlib import Path

import rich_click as click

from gemmesh.errors import GemMeshError, ToleranceExceededError
from gemmesh.geometry.io import load_mesh, sidecar_path
from gemmesh.nn.checkpoint import load_checkpoint
from gemmesh.nn.train import restore_model
from gemmesh.utils import resolve_seed, setup_logging, write_json, write_manifest
from gemmesh.verify import (
    check_gauge,
    check_remesh,
    check_se3,
    check_translation,
    compare_receptive_fields,
)

SUITES = ("se3", "gauge", "remesh", "rf")


def run_suite(suite: str, model, mesh, seed: int, flow=None) -> dict:
    """Run one verification suite and collect its reports.

    Returns:
        dict: suite, list of report dicts and whether every bounded check passed.
    """
    if suite == "se3":
        reports = [
            check_translation(model, mesh, seed, flow).to_dict(),
            check_se3(model, mesh, seed, flow).to_dict(),
        ]
    elif suite == "gauge":
        reports = [check_gauge(model, mesh, seed, flow).to_dict()]
    elif suite == "remesh":
        reports = [
            check_remesh(model, mesh, mode, seed, flow).to_dict()
            for mode in ("refine", "resample")
        ]
    else:
        reports = [compare_receptive_fields(model.config, mesh, flow=flow)]
    for report in reports:
        status = "passed" if report["passed"] else "FAILED"
        value = report.get("discrepancy", report.get("ratio"))
        logging.info(f"{report['check']}: {value:.3e} ({status})")
    return {"suite": suite, "reports": reports, "passed": all(r["passed"] for r in reports)}


@click.command()
@click.option(
    "--checkpoint",
    "-c",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Checkpoint whose model is checked.",
)
@click.option(
    "--mesh",
    "-m",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="OBJ mesh to run the checks on (its JSON sidecar supplies markers and flow).",
)
@click.option(
    "--suite",
    required=True,
    type=click.Choice(SUITES, case_sensitive=False),
    help="se3: rigid motions, gauge: random gauges, remesh: refinement and resampling, "
    "rf: receptive-field reach.",
)
@click.option(
    "--seed",
    "-s",
    default=0,
    show_default=True,
    type=int,
    help="Seed of the random transforms. $GEMMESH_SEED overrides.",
)
@click.option(
    "--out",
    "-o",
    type=click.Path(file_okay=False),
    help="Directory for the JSON report. [default: print to stdout]",
)
@click.option("--silent", is_flag=True, help="Only critical errors will be printed.")
@click.option("--verbose", "-v", is_flag=True, help="Print debug related text.")
@click.help_option("--help", "-h")
def verify(checkpoint, mesh, suite, seed, out, silent, verbose):
    """Check equivariance, remeshing sensitivity or receptive field of a model."""
    setup_logging(silent, verbose)
    started = time.time()
    seed = resolve_seed(seed)
    suite = suite.lower()

    try:
        model, _ = restore_model(load_checkpoint(checkpoint))
        test_mesh, sidecar = load_mesh(mesh)
        result = run_suite(suite, model, test_mesh, seed, sidecar.get("flow"))
    except GemMeshError as e:
        logging.error(e)
        sys.exit(e.exit_code)
    result.update({"checkpoint": str(checkpoint), "mesh": str(mesh), "seed": seed})

    if out is None:
        click.echo(json.dumps(result, indent=2, sort_keys=True))
    else:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        report_path = outdir / f"verify_{suite}.json"
        logging.info(f"Writing report to {report_path}")
        write_json(result, report_path)
        write_manifest(
            outdir,
            "verify",
            seed,
            [checkpoint, mesh, sidecar_path(mesh)],
            [report_path],
            started,
            extra={"suite": suite, "passed": result["passed"]},
        )

    if not result["passed"]:
        failed = [r["check"] for r in result["reports"] if not r["passed"]]
        logging.error(f"Tolerance exceeded: {', '.join(failed)}")
        sys.exit(ToleranceExceededError.exit_code)
