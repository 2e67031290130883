"""Two-path equivariance checks, remeshing sensitivity and receptive-field reach."""
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from gemmesh.config import ModelConfig
from gemmesh.constants import (
    FULL_TOLERANCE,
    LINEAR_TOLERANCE,
    RECEPTIVE_FIELD_RATIO,
    TRANSLATION_TOLERANCE,
)
from gemmesh.geometry.gauge import random_gauge_angles, rotate_gauges
from gemmesh.geometry.mesh import Mesh, build_point_set, vertex_normals
from gemmesh.geometry.primitives import subdivide
from gemmesh.nn.data import MeshContext, collate, level_radii, prepare_sample
from gemmesh.nn.irreps import rotate_field
from gemmesh.nn.model import MeshUNet, expand_support

RESAMPLE_KEEP = 0.7
TRANSLATION_SCALE = 10.0  # mm, spread of random translations


@dataclass
class TransformReport:
    """Outcome of comparing a model's output along two paths.

    Attributes:
        check (str): se3, translation, gauge or remesh.
        transform (dict): Rotation matrix and translation, or gauge angle seed and range.
        discrepancy (float): ||a - b|| / max(||a||, 1e-12) over every vertex and channel.
        max_relative, mean_relative (float): Per-vertex ||a_i - b_i|| over the largest ||a_j||.
        layers (dict): Layer path to the discrepancy of its intrinsic output.
        tolerance (float, optional): Bound the discrepancy is held to.
    """

    check: str
    transform: dict
    discrepancy: float
    max_relative: float
    mean_relative: float
    layers: dict = field(default_factory=dict)
    tolerance: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.tolerance is None or self.discrepancy <= self.tolerance

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def relative_discrepancy(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-12))


def vertex_discrepancies(a, b) -> tuple:
    """(max, mean) of per-vertex difference norms relative to the largest vertex norm."""
    a = np.asarray(a, dtype=np.float64).reshape(len(a), -1)
    b = np.asarray(b, dtype=np.float64).reshape(len(b), -1)
    scale = max(float(np.linalg.norm(a, axis=1).max()), 1e-12)
    per_vertex = np.linalg.norm(a - b, axis=1) / scale
    return float(per_vertex.max()), float(per_vertex.mean())


def layer_signatures(model: MeshUNet) -> dict:
    """Output signature of every top-level layer, keyed by module path."""
    sigs = model.signatures
    names = {"lift": sigs[0], "head": model.out_signature}
    for i, blocks in enumerate(model.encoder):
        names.update({f"encoder.{i}.{j}": sigs[i] for j in range(len(blocks))})
    for i, blocks in enumerate(model.decoder):
        names.update({f"decoder.{i}.{j}": sigs[i] for j in range(len(blocks))})
    names.update({f"down.{i}": sigs[i + 1] for i in range(len(model.down))})
    names.update({f"up.{i}": sigs[i] for i in range(len(model.up))})
    return names


def layer_levels(model: MeshUNet) -> dict:
    """Hierarchy level each top-level layer's output lives on."""
    levels = {"lift": 0, "head": 0}
    for i, blocks in enumerate(model.encoder):
        levels.update({f"encoder.{i}.{j}": i for j in range(len(blocks))})
    for i, blocks in enumerate(model.decoder):
        levels.update({f"decoder.{i}.{j}": i for j in range(len(blocks))})
    levels.update({f"down.{i}": i + 1 for i in range(len(model.down))})
    levels.update({f"up.{i}": i for i in range(len(model.up))})
    return levels


def run_with_layers(model: MeshUNet, context: MeshContext) -> tuple:
    """Evaluation-mode output (V, T, C) plus every top-level layer's intrinsic output."""
    captured = {}
    modules = dict(model.named_modules())
    handles = []
    for name in layer_signatures(model):
        def hook(_module, _inputs, output, name=name):
            captured[name] = output.detach().numpy()

        handles.append(modules[name].register_forward_hook(hook))
    model.eval()
    try:
        with torch.no_grad():
            out = model(collate([context], model.config)).numpy()
    finally:
        for handle in handles:
            handle.remove()
    return out, captured


def _report(check, transform, a, b, layers, tolerance) -> TransformReport:
    max_rel, mean_rel = vertex_discrepancies(a, b)
    report = TransformReport(
        check, transform, relative_discrepancy(a, b), max_rel, mean_rel, layers, tolerance
    )
    logging.info(
        f"{check}: discrepancy {report.discrepancy:.3e}"
        + ("" if tolerance is None else f" (tolerance {tolerance:.0e})")
    )
    return report


def equivariance_tolerance(config: ModelConfig) -> float:
    return FULL_TOLERANCE if config.nonlinearity else LINEAR_TOLERANCE


def check_se3(
    model: MeshUNet,
    mesh: Mesh,
    seed: int = 0,
    flow: Optional[float] = None,
    rotation: Optional[np.ndarray] = None,
    translation: Optional[np.ndarray] = None,
    check: str = "se3",
    tolerance: Optional[float] = None,
) -> TransformReport:
    """Compare rotated predictions on `mesh` with predictions on the moved mesh.

    The moved mesh is preprocessed from scratch, except that its normals and gauges
    are the original ones rotated by g.

    Args:
        model (MeshUNet): Model to test; its config drives preprocessing.
        mesh (Mesh): Test mesh.
        seed (int): Draws the rigid motion when none is given.
        flow (float, optional): Boundary condition.
        rotation (np.ndarray, optional): (3, 3) rotation; random when omitted.
        translation (np.ndarray, optional): (3,) translation in mm; random when omitted.

    Returns:
        TransformReport: Output discrepancy and per-layer discrepancies.
    """
    config = model.config
    rng = np.random.default_rng(seed)
    if rotation is None:
        rotation = Rotation.random(None, rng).as_matrix()
    if translation is None:
        translation = TRANSLATION_SCALE * rng.normal(size=3)
    rotation, translation = np.asarray(rotation, dtype=np.float64), np.asarray(translation)

    context = prepare_sample(mesh, config, flow)
    moved = prepare_sample(
        mesh.transformed(rotation, translation),
        config,
        flow,
        frames=context.frames @ rotation.T,
        normals=context.normals @ rotation.T,
    )
    out, layers = run_with_layers(model, context)
    out_moved, layers_moved = run_with_layers(model, moved)
    expected = out @ rotation.T if out.shape[-1] == 3 else out
    breakdown = {name: relative_discrepancy(layers[name], layers_moved[name]) for name in layers}
    transform = {"rotation": rotation.tolist(), "translation": translation.tolist()}
    if tolerance is None:
        tolerance = equivariance_tolerance(config)
    return _report(check, transform, expected, out_moved, breakdown, tolerance)


def check_translation(
    model: MeshUNet, mesh: Mesh, seed: int = 0, flow: Optional[float] = None
) -> TransformReport:
    """check_se3 restricted to a pure translation, held to the translation tolerance."""
    return check_se3(
        model,
        mesh,
        seed,
        flow,
        rotation=np.eye(3),
        check="translation",
        tolerance=TRANSLATION_TOLERANCE,
    )


def check_gauge(
    model: MeshUNet, mesh: Mesh, seed: int = 0, flow: Optional[float] = None
) -> TransformReport:
    """Randomize every gauge and compare ambient outputs, which must not change.

    Per-layer discrepancies compare the new intrinsic features with the old ones
    expressed in the rotated gauges, i.e. rho(-angle) applied per vertex.
    """
    config = model.config
    context = prepare_sample(mesh, config, flow)
    angles = random_gauge_angles(mesh.n_vertices, seed)
    rotated = prepare_sample(mesh, config, flow, frames=rotate_gauges(context.frames, angles))
    out, layers = run_with_layers(model, context)
    out_rotated, layers_rotated = run_with_layers(model, rotated)

    signatures, levels = layer_signatures(model), layer_levels(model)
    breakdown = {}
    for name, values in layers.items():
        level_angles = angles[context.hierarchy.levels[levels[name]].indices]
        expected = rotate_field(
            torch.as_tensor(values), signatures[name], -torch.as_tensor(level_angles)
        ).numpy()
        breakdown[name] = relative_discrepancy(expected, layers_rotated[name])
    transform = {"seed": seed, "angle_min": float(angles.min()), "angle_max": float(angles.max())}
    return _report("gauge", transform, out, out_rotated, breakdown, equivariance_tolerance(config))


def remesh(mesh: Mesh, mode: str, seed: int = 0, keep_fraction: float = RESAMPLE_KEEP) -> tuple:
    """Refine a mesh by midpoint subdivision or resample it into an oriented point set.

    Resampling keeps a seeded random vertex subset (in original order) with the
    original vertex normals and drops the faces.

    Returns:
        tuple: (new Mesh, (k,) original ids of vertices kept as new vertices 0..k-1)
    """
    if mode == "refine":
        return subdivide(mesh), np.arange(mesh.n_vertices)
    if mode != "resample":
        raise ValueError(f"unknown remeshing mode {mode}")
    n = mesh.n_vertices
    count = int(round(keep_fraction * n))
    if count >= n:
        kept = np.arange(n)
    else:
        kept = np.sort(np.random.default_rng(seed).choice(n, size=count, replace=False))
    new_id = np.full(n, -1, dtype=np.int64)
    new_id[kept] = np.arange(len(kept))
    markers = {name: new_id[ids][new_id[ids] >= 0] for name, ids in mesh.markers.items()}
    return build_point_set(mesh.vertices[kept], vertex_normals(mesh)[kept], markers), kept


def check_remesh(
    model: MeshUNet, mesh: Mesh, mode: str, seed: int = 0, flow: Optional[float] = None
) -> TransformReport:
    """Relative prediction change at the original vertices after remeshing.

    The radius-graph radii of the original mesh are kept so only the sampling changes.
    """
    base = level_radii(mesh, model.config)[0]
    fixed = model.config.model_copy(update={"radius_mm": base})
    remeshed, kept = remesh(mesh, mode, seed)
    out, _ = run_with_layers(model, prepare_sample(mesh, fixed, flow))
    out_new, _ = run_with_layers(model, prepare_sample(remeshed, fixed, flow))
    transform = {"mode": mode, "seed": seed, "vertices": remeshed.n_vertices}
    return _report(f"remesh-{mode}", transform, out[kept], out_new[: len(kept)], {}, None)


def stacked_reach(level: dict, seed_vertex: int, layers: int) -> np.ndarray:
    """Reach of `layers` stacked convolutions on one level graph."""
    mask = np.zeros(level["n_vertices"], dtype=bool)
    mask[seed_vertex] = True
    for _ in range(layers):
        mask = expand_support(mask, level)
    return mask


def receptive_field(model: MeshUNet, context: MeshContext, seed_vertex: int) -> np.ndarray:
    """Vertices whose prediction depends on the input at `seed_vertex`."""
    return model.receptive_field(context.levels, context.transitions, seed_vertex)


def mask_span(positions: np.ndarray, mask: np.ndarray) -> float:
    """Extent of the masked vertices along the principal axis of all positions."""
    centered = positions - positions.mean(axis=0)
    axis = np.linalg.svd(centered, full_matrices=False)[2][0]
    projected = centered[mask] @ axis
    return float(projected.max() - projected.min())


def compare_receptive_fields(
    config: ModelConfig, mesh: Mesh, seed_vertex: Optional[int] = None, flow=None
) -> dict:
    """Reach span of the configured model against the one-level model of the same config."""
    if seed_vertex is None:
        seed_vertex = mesh.n_vertices // 2
    single = config.model_copy(update={"levels": 1})
    spans = {}
    for name, cfg in (("model", config), ("one_level", single)):
        context = prepare_sample(mesh, cfg, flow)
        mask = receptive_field(MeshUNet(cfg), context, seed_vertex)
        spans[name] = {"vertices": int(mask.sum()), "span_mm": mask_span(mesh.vertices, mask)}
    ratio = spans["model"]["span_mm"] / max(spans["one_level"]["span_mm"], 1e-12)
    passed = config.levels == 1 or ratio >= RECEPTIVE_FIELD_RATIO
    logging.info(f"Receptive field span ratio {ratio:.2f} ({config.levels} levels vs 1)")
    return {
        "check": "rf",
        "seed_vertex": seed_vertex,
        "levels": config.levels,
        "spans": spans,
        "ratio": ratio,
        "threshold": RECEPTIVE_FIELD_RATIO,
        "passed": passed,
    }
