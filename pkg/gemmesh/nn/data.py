"""Per-mesh preprocessing (graphs, gauges, hierarchy, features) and batch collation."""
import logging
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from gemmesh.config import ModelConfig
from gemmesh.errors import ShapeMismatchError
from gemmesh.geometry.gauge import GaugeAtlas, build_gauges
from gemmesh.geometry.io import load_mesh
from gemmesh.geometry.mesh import Mesh, mean_edge_length, radius_graph, vertex_normals
from gemmesh.nn.features import FeaturePack, ambient_values, irrep_values, local_shape_features
from gemmesh.nn.graph import DTYPE, LevelGraph, LevelTransition, level_arrays
from gemmesh.nn.pooling import Hierarchy, build_hierarchy
from gemmesh.synth.labels import read_labels
from gemmesh.utils import run_parallel


@dataclass(frozen=True, eq=False)
class MeshContext:
    """Everything a model needs about one mesh, in numpy form."""

    positions: np.ndarray
    frames: np.ndarray
    pack: FeaturePack
    radius: float
    levels: list
    transitions: list
    hierarchy: Optional[Hierarchy] = None

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def normals(self) -> np.ndarray:
        return self.frames[:, 2]


@dataclass(frozen=True, eq=False)
class Sample:
    """A prepared mesh with its label array (V, T, C)."""

    name: str
    mesh: Mesh
    context: MeshContext
    label: np.ndarray
    flow: Optional[float] = None
    sidecar: dict = field(default_factory=dict)


@dataclass
class Batch:
    features: torch.Tensor
    frames: torch.Tensor
    levels: list
    transitions: list
    sizes: list

    def split(self, values: torch.Tensor) -> list:
        """Split a per-vertex tensor back into per-sample pieces."""
        return list(torch.split(values, self.sizes))


def level_radii(mesh: Mesh, config: ModelConfig) -> list:
    base = config.radius_mm or config.radius_edge_factor * mean_edge_length(mesh)
    return [base * f for f in config.radius_factors[: config.levels]]


def prepare_sample(
    mesh: Mesh,
    config: ModelConfig,
    flow: Optional[float] = None,
    frames: Optional[np.ndarray] = None,
    normals: Optional[np.ndarray] = None,
    geodesic_distance: Optional[np.ndarray] = None,
) -> MeshContext:
    """Build graphs, gauges, the pooling hierarchy and input features for one mesh.

    Args:
        mesh (Mesh): Wall mesh or point set.
        config (ModelConfig): Supplies radii, pooling schedule and seed.
        flow (float, optional): Inlet flow (ml/s) injected when the config asks for it.
        frames (np.ndarray, optional): Gauges to use instead of the default choice.
        normals (np.ndarray, optional): Normals to use instead of the mesh's own.
        geodesic_distance (np.ndarray, optional): Precomputed inlet distances.

    Returns:
        MeshContext: The prepared mesh.
    """
    radii = level_radii(mesh, config)
    normals = vertex_normals(mesh) if normals is None else np.asarray(normals)
    graph = radius_graph(mesh, radii[0])
    if frames is None:
        frames = build_gauges(mesh, normals, graph=graph)
    atlas = GaugeAtlas.from_frames(mesh.vertices, frames, graph)
    hierarchy = build_hierarchy(
        mesh, atlas, config.pool_ratios[: config.levels], radii, seed=config.seed
    )
    bc = flow if config.boundary_condition else None
    if config.boundary_condition and flow is None:
        logging.warning("Model expects a boundary condition but the sample has no flow")
        bc = 0.0
    pack = local_shape_features(mesh, graph, normals, bc, geodesic_distance)
    positions = mesh.vertices
    levels = [
        level_arrays(level.graph, positions[level.indices], level.atlas)
        for level in hierarchy.levels
    ]
    transitions = [t.arrays() for t in hierarchy.transitions]
    return MeshContext(positions, frames, pack, radii[0], levels, transitions, hierarchy)


def rotate_context(context: MeshContext, rotation: np.ndarray) -> MeshContext:
    """The context a rigidly rotated mesh would produce, without recomputing it."""
    levels = [dict(level, offsets=level["offsets"] @ rotation.T) for level in context.levels]
    return replace(
        context,
        positions=context.positions @ rotation.T,
        frames=context.frames @ rotation.T,
        pack=context.pack.rotated(rotation),
        levels=levels,
        hierarchy=None,
    )


def input_features(context: MeshContext, config: ModelConfig) -> np.ndarray:
    if config.conv_kind == "gem":
        return irrep_values(context.pack, context.frames, context.radius, config.distance_scale_mm)
    return ambient_values(context.pack, context.radius, config.distance_scale_mm)


def collate(contexts: list, config: ModelConfig) -> Batch:
    """Stack contexts into one disjoint-union graph batch."""
    features = np.concatenate([input_features(c, config) for c in contexts])
    frames = np.concatenate([c.frames for c in contexts])
    levels = [
        LevelGraph.collate([LevelGraph.from_arrays(c.levels[i]) for c in contexts])
        for i in range(config.levels)
    ]
    transitions = [
        LevelTransition.collate([LevelTransition.from_arrays(c.transitions[i]) for c in contexts])
        for i in range(config.levels - 1)
    ]
    return Batch(
        features=torch.as_tensor(features, dtype=DTYPE),
        frames=torch.as_tensor(frames, dtype=DTYPE),
        levels=levels,
        transitions=transitions,
        sizes=[c.n_vertices for c in contexts],
    )


def collate_labels(labels: list) -> torch.Tensor:
    return torch.as_tensor(np.concatenate(labels), dtype=DTYPE)


def load_sample(path: Union[str, Path], config: ModelConfig) -> Sample:
    """Load an OBJ mesh, its sidecar and the label file of the configured target.

    Raises:
        ShapeMismatchError: The labels do not carry the configured number of time steps.
    """
    path = Path(path)
    mesh, sidecar = load_mesh(path)
    flow = sidecar.get("flow")
    label = read_labels(path, config.target, mesh.n_vertices)
    if label.shape[1] != config.time_steps:
        raise ShapeMismatchError(
            f"{path.name} has {label.shape[1]} time steps, the model predicts {config.time_steps}"
        )
    context = prepare_sample(mesh, config, flow=flow)
    return Sample(path.stem, mesh, context, label, flow, sidecar)


def dataset_paths(directory: Union[str, Path]) -> list:
    return sorted(Path(directory).glob("*.obj"))


def load_dataset(directory: Union[str, Path], config: ModelConfig, jobs: int = 1) -> list:
    """Every labelled mesh under `directory`, sorted by file name.

    Preprocessing runs on up to `jobs` processes; the order does not depend on it.
    """
    paths = dataset_paths(directory)
    logging.info(f"Preparing {len(paths)} meshes from {directory}")
    samples = run_parallel(partial(load_sample, config=config), paths, jobs)
    for sample in samples:
        logging.debug(f"Prepared {sample.name} ({sample.mesh.n_vertices} vertices)")
    return samples
