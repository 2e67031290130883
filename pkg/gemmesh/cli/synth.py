import logging
import sys
import time
from functools import partial
from pathlib import Path

import numpy as np
import pandas as pd
import rich_click as click

from gemmesh.constants import DEFAULT_SEGMENTS, SUMMARY_NAME, TRAIN_FLOW_RANGE
from gemmesh.errors import GemMeshError
from gemmesh.geometry.io import write_vtk
from gemmesh.synth.bifurcating import PROPOSAL_KEYS, synth_bifurcating
from gemmesh.synth.labels import label_artery, save_labeled
from gemmesh.synth.single import synth_single
from gemmesh.utils import (
    parse_flow_range,
    resolve_seed,
    run_parallel,
    setup_logging,
    write_json,
    write_manifest,
)

GENERATORS = {"single": synth_single, "bifurcating": synth_bifurcating}


def sample_name(kind: str, seed: int) -> str:
    return f"{kind}_{seed:06d}"


def field_arrays(labeled) -> tuple:
    """VTK vectors and scalars of both label targets, one entry per time step."""
    steps = range(labeled.wss.shape[1])
    vectors = {f"wss_t{k}": labeled.wss[:, k] for k in steps}
    scalars = {f"pressure_t{k}": labeled.pressure[:, k, 0] for k in steps}
    return vectors, scalars


def synth_sample(
    seed: int,
    kind: str,
    outdir: str,
    segments: int,
    spacing,
    flow_range: tuple,
    time_steps: int,
    vtk: bool,
) -> dict:
    """Generate, label and write one sample; returns its record for the summary."""
    artery = GENERATORS[kind](
        seed, segments=segments, spacing=spacing, flow_range=flow_range, time_steps=time_steps
    )
    labeled = label_artery(artery)
    path = Path(outdir) / f"{sample_name(kind, seed)}.obj"
    paths = save_labeled(path, labeled)
    if vtk:
        vectors, scalars = field_arrays(labeled)
        write_vtk(path.with_suffix(".vtk"), labeled.mesh, vectors, scalars)
        paths.append(path.with_suffix(".vtk"))

    spec = artery.spec
    record = {
        "name": path.stem,
        "seed": seed,
        "attempt": spec.attempt,
        "flow": spec.flow,
        "vertices": labeled.mesh.n_vertices,
        "faces": labeled.mesh.n_faces,
        "paths": [str(p) for p in paths],
    }
    if kind == "single":
        record["radius"] = spec.radius
        record["stenoses"] = len(spec.stenoses)
    else:
        record.update(spec.angles.model_dump())
        record.update({f"r_{k}": v for k, v in spec.radii.model_dump().items()})
        record["law_residual"] = spec.law_residual
        record["proposals"] = artery.proposals
    return record


def _stats(values) -> dict:
    values = np.asarray(values, dtype=np.float64)
    return {"min": float(values.min()), "max": float(values.max()), "mean": float(values.mean())}


def summarize_synthesis(records: list, kind: str, flow_range: tuple) -> dict:
    """Population statistics of a generated batch.

    Bifurcating batches report the means of the accepted parameters and of every
    proposal drawn, so the proposal Gaussians can be checked separately from the
    constrained population.
    """
    summary = {
        "kind": kind,
        "count": len(records),
        "seeds": [r["seed"] for r in records],
        "flow_range": list(flow_range),
        "flow": _stats([r["flow"] for r in records]),
        "vertices": _stats([r["vertices"] for r in records]),
        "regenerated": sum(1 for r in records if r["attempt"] > 0),
    }
    if kind == "single":
        summary["radius"] = _stats([r["radius"] for r in records])
        summary["stenoses"] = _stats([r["stenoses"] for r in records])
        return summary

    accepted = pd.DataFrame([{k: r[k] for k in PROPOSAL_KEYS} for r in records])
    proposals = pd.DataFrame([p for r in records for p in r["proposals"]])
    summary["accepted_means"] = {k: float(accepted[k].mean()) for k in PROPOSAL_KEYS}
    summary["accepted_std"] = {k: float(accepted[k].std(ddof=0)) for k in PROPOSAL_KEYS}
    summary["proposal_means"] = {k: float(proposals[k].mean()) for k in PROPOSAL_KEYS}
    summary["proposals"] = int(len(proposals))
    summary["acceptance_rate"] = len(records) / len(proposals)
    summary["max_abs_law_residual"] = max(abs(r["law_residual"]) for r in records)
    return summary


@click.command()
@click.option(
    "--kind",
    "-k",
    required=True,
    type=click.Choice(["single", "bifurcating"], case_sensitive=False),
    help="Artery class to generate.",
)
@click.option(
    "--out",
    "-o",
    required=True,
    type=click.Path(file_okay=False),
    help="Directory to write meshes, labels and the summary to.",
)
@click.option(
    "--count", "-n", default=1, show_default=True, type=click.IntRange(min=1), help="Samples."
)
@click.option(
    "--seed",
    "-s",
    default=0,
    show_default=True,
    type=int,
    help="Seed of the first sample; samples use seed..seed+count-1. $GEMMESH_SEED overrides.",
)
@click.option(
    "--flow-range",
    default=",".join(str(v) for v in TRAIN_FLOW_RANGE),
    show_default=True,
    help="Inlet flow bounds in ml/s, a subrange of 0.63,5.61.",
)
@click.option(
    "--segments",
    default=DEFAULT_SEGMENTS,
    show_default=True,
    type=click.IntRange(min=6),
    help="Vertices per contour (even).",
)
@click.option(
    "--spacing",
    type=click.FloatRange(min=0, min_open=True),
    help="Axial ring spacing relative to the local radius. [default: 2*pi/segments]",
)
@click.option(
    "--time-steps",
    default=1,
    show_default=True,
    type=click.IntRange(min=1),
    help="Samples of the cardiac cycle in the labels (1 is steady flow).",
)
@click.option("--vtk", is_flag=True, help="Also write each labelled mesh as a VTK file.")
@click.option(
    "--jobs", "-j", default=1, show_default=True, type=click.IntRange(min=1), help="Processes."
)
@click.option("--silent", is_flag=True, help="Only critical errors will be printed.")
@click.option("--verbose", "-v", is_flag=True, help="Print debug related text.")
@click.help_option("--help", "-h")
def synth(
    kind,
    out,
    count,
    seed,
    flow_range,
    segments,
    spacing,
    time_steps,
    vtk,
    jobs,
    silent,
    verbose,
):
    """Generate labelled synthetic artery meshes."""
    setup_logging(silent, verbose)
    started = time.time()
    kind = kind.lower()
    seed = resolve_seed(seed)
    flow_range = parse_flow_range(flow_range)
    if segments % 2:
        logging.error(f"--segments must be even, got {segments}")
        sys.exit(1)

    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    seeds = list(range(seed, seed + count))
    logging.info(f"Generating {count} {kind} arteries (seeds {seeds[0]}..{seeds[-1]})")
    logging.info(f"Inlet flow range: {flow_range[0]}-{flow_range[1]} ml/s")
    worker = partial(
        synth_sample,
        kind=kind,
        outdir=str(outdir),
        segments=segments,
        spacing=spacing,
        flow_range=flow_range,
        time_steps=time_steps,
        vtk=vtk,
    )
    try:
        records = run_parallel(worker, seeds, jobs)
    except GemMeshError as e:
        logging.error(f"Generation failed: {e}")
        sys.exit(e.exit_code)

    summary = summarize_synthesis(records, kind, flow_range)
    summary_path = outdir / SUMMARY_NAME
    logging.info(f"Writing summary to {summary_path}")
    write_json(summary, summary_path)
    outputs = [p for r in records for p in r["paths"]] + [summary_path]
    write_manifest(
        outdir,
        "synth",
        seed,
        [],
        outputs,
        started,
        extra={"kind": kind, "count": count, "flow_range": list(flow_range)},
    )
