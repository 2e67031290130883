"""Nested vertex subsets, cluster partitions and transport-aware pooling."""
import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import torch
from scipy.spatial import cKDTree

from gemmesh.errors import ConfigInvalidError, EmptyLevelError, LevelMismatchError
from gemmesh.geometry.gauge import GaugeAtlas, chord_transport
from gemmesh.geometry.mesh import Mesh, NeighborGraph, radius_graph_points
from gemmesh.nn.graph import DTYPE, LevelTransition, scatter_max, scatter_mean
from gemmesh.nn.irreps import IrrepField, IrrepSignature, rotate_field

# relative distance below which two candidates count as equidistant
TIE_TOL = 1e-9
INTERPOLATION_NEIGHBORS = 3
INTERPOLATION_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class Level:
    """One hierarchy level: sorted indices into the finest level's vertices."""

    indices: np.ndarray
    radius: float
    graph: NeighborGraph
    atlas: GaugeAtlas

    @property
    def n_vertices(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class Transition:
    """Map from level i to level i + 1.

    Attributes:
        parent (np.ndarray): Coarse (local) vertex of each fine (local) vertex.
        transport (np.ndarray): g_{q->p} from each fine vertex q to its coarse vertex p.
        interp_index (np.ndarray): (n_fine, k) nearest coarse vertices for interpolation.
        interp_weight (np.ndarray): (n_fine, k) normalized inverse-distance weights.
    """

    parent: np.ndarray
    transport: np.ndarray
    n_coarse: int
    interp_index: np.ndarray
    interp_weight: np.ndarray

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.parent, minlength=self.n_coarse)

    def arrays(self) -> dict:
        return {
            "parent": self.parent,
            "transport": self.transport,
            "n_coarse": self.n_coarse,
            "interp_index": self.interp_index,
            "interp_weight": self.interp_weight,
        }

    def tensors(self) -> LevelTransition:
        return LevelTransition.from_arrays(self.arrays())


@dataclass(frozen=True, eq=False)
class Hierarchy:
    levels: list
    transitions: list

    @property
    def depth(self) -> int:
        return len(self.levels)


def farthest_point_order(points: np.ndarray, count: int, start: int = 0) -> np.ndarray:
    """Greedy farthest-point sequence of `count` indices beginning at `start`.

    Near-equal distances resolve to the smallest index, so the order depends only on
    pairwise distances.
    """
    order = np.empty(count, dtype=np.int64)
    order[0] = start
    distance = np.linalg.norm(points - points[start], axis=1)
    tolerance = TIE_TOL * max(float(distance.max()), np.finfo(float).tiny)
    for k in range(1, count):
        chosen = int(np.flatnonzero(distance >= distance.max() - tolerance)[0])
        order[k] = chosen
        distance = np.minimum(distance, np.linalg.norm(points - points[chosen], axis=1))
    return order


def nearest_parent(fine: np.ndarray, coarse: np.ndarray, scale: float) -> np.ndarray:
    """Index of the nearest coarse point for every fine point, ties to the smaller index."""
    if len(coarse) == 1:
        return np.zeros(len(fine), dtype=np.int64)
    distance, index = cKDTree(coarse).query(fine, k=2)
    tie = distance[:, 1] - distance[:, 0] <= TIE_TOL * scale
    return np.where(tie, index.min(axis=1), index[:, 0]).astype(np.int64)


def interpolation_weights(fine: np.ndarray, coarse: np.ndarray) -> tuple:
    k = min(INTERPOLATION_NEIGHBORS, len(coarse))
    distance, index = cKDTree(coarse).query(fine, k=k)
    distance = distance.reshape(len(fine), k)
    index = index.reshape(len(fine), k).astype(np.int64)
    weight = 1.0 / (distance + INTERPOLATION_EPS)
    return index, weight / weight.sum(axis=1, keepdims=True)


def _check_schedule(ratios: Sequence[float], radii: Sequence[float]) -> None:
    if len(ratios) != len(radii) or not ratios:
        raise ConfigInvalidError(f"{len(ratios)} ratios do not pair with {len(radii)} radii")
    if ratios[0] != 1.0:
        raise ConfigInvalidError(f"the finest level keeps every vertex, got ratio {ratios[0]}")
    if any(b >= a for a, b in zip(ratios, ratios[1:])) or ratios[-1] <= 0:
        raise ConfigInvalidError(f"ratios must strictly decrease within (0, 1], got {ratios}")
    if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
        raise ConfigInvalidError(f"radii must be positive and increasing, got {radii}")


def build_hierarchy(
    mesh: Mesh,
    gauges: Union[GaugeAtlas, np.ndarray],
    ratios: Sequence[float],
    radii: Sequence[float],
    seed: int = 0,
) -> Hierarchy:
    """Farthest-point subsets with nearest-vertex clusters and per-level radius graphs.

    Coarse levels inherit the frames of their retained vertices. Level i keeps
    round(ratios[i] * V) vertices, each a prefix of one farthest-point order, so the
    subsets nest.

    Args:
        mesh (Mesh): Finest-level geometry.
        gauges: GaugeAtlas or (V, 3, 3) frames of the finest level.
        ratios (Sequence[float]): Kept fraction per level, starting at 1.0.
        radii (Sequence[float]): Radius-graph radius per level (mm).
        seed (int): Picks the farthest-point starting vertex.

    Raises:
        ConfigInvalidError: Ratios or radii are malformed.
        EmptyLevelError: A level would be empty or no smaller than its parent.
        DisconnectedNeighborhoodError: A level's radius graph leaves a vertex isolated.

    Returns:
        Hierarchy: Levels and transitions.
    """
    _check_schedule(list(ratios), list(radii))
    frames = gauges.frames if isinstance(gauges, GaugeAtlas) else np.asarray(gauges)
    positions = mesh.vertices
    n = mesh.n_vertices
    counts = [n] + [int(round(r * n)) for r in ratios[1:]]
    for i, (before, count) in enumerate(zip(counts, counts[1:]), start=1):
        if count < 1 or count >= before:
            raise EmptyLevelError(
                f"level {i} would keep {count} of {before} vertices with ratio {ratios[i]}"
            )

    start = int(np.random.default_rng(seed).integers(n))
    order = farthest_point_order(positions, counts[-1], start) if len(counts) > 1 else None
    scale = float(np.ptp(positions, axis=0).max())

    levels, transitions = [], []
    for i, (count, radius) in enumerate(zip(counts, radii)):
        indices = np.arange(n) if i == 0 else np.sort(order[:count])
        points = positions[indices]
        if (
            i == 0
            and isinstance(gauges, GaugeAtlas)
            and np.isclose(gauges.graph.radius, radius)
        ):
            graph = gauges.graph
        else:
            graph = radius_graph_points(points, radius)
        atlas = GaugeAtlas.from_frames(points, frames[indices], graph)
        levels.append(Level(indices, float(radius), graph, atlas))
        logging.debug(
            f"Level {i}: {count} vertices, radius {radius:.3f} mm, {graph.n_pairs} pairs"
        )

    for fine, coarse in zip(levels, levels[1:]):
        fine_points, coarse_points = positions[fine.indices], positions[coarse.indices]
        parent = nearest_parent(fine_points, coarse_points, scale)
        retained = np.searchsorted(fine.indices, coarse.indices)
        parent[retained] = np.arange(coarse.n_vertices)
        transport = chord_transport(
            positions, frames, coarse.indices[parent], fine.indices
        )
        interp_index, interp_weight = interpolation_weights(fine_points, coarse_points)
        transitions.append(
            Transition(parent, transport, coarse.n_vertices, interp_index, interp_weight)
        )
    return Hierarchy(levels, transitions)


def transport_pool(
    x: torch.Tensor, signature: IrrepSignature, transition: LevelTransition
) -> torch.Tensor:
    """Cluster mean of features transported to their coarse vertex."""
    moved = rotate_field(x, signature, transition.transport)
    return scatter_mean(moved, transition.parent, transition.cluster_size)


def transport_unpool(
    x: torch.Tensor, signature: IrrepSignature, transition: LevelTransition
) -> torch.Tensor:
    """Copy each coarse value to its cluster members, rotated back into their gauge."""
    return rotate_field(x[transition.parent], signature, -transition.transport)


def mean_pool(x: torch.Tensor, transition: LevelTransition) -> torch.Tensor:
    return scatter_mean(x, transition.parent, transition.cluster_size)


def broadcast_unpool(x: torch.Tensor, transition: LevelTransition) -> torch.Tensor:
    return x[transition.parent]


def max_pool(x: torch.Tensor, transition: LevelTransition) -> torch.Tensor:
    return scatter_max(x, transition.parent, transition.n_coarse)


def interpolate_unpool(x: torch.Tensor, transition: LevelTransition) -> torch.Tensor:
    """Inverse-distance weighted mean of the nearest coarse vertices."""
    return torch.einsum("fk,fkc->fc", transition.interp_weight, x[transition.interp_index])


def _transition(hierarchy: Hierarchy, level: int) -> Transition:
    if not 0 <= level < len(hierarchy.transitions):
        raise LevelMismatchError(
            f"level {level} has no coarser level in a {hierarchy.depth}-level hierarchy"
        )
    return hierarchy.transitions[level]


def pool(field: IrrepField, hierarchy: Hierarchy, level: int) -> IrrepField:
    """Pool a field on level `level` onto level `level + 1`.

    Raises:
        LevelMismatchError: The field does not live on the given level.
    """
    transition = _transition(hierarchy, level)
    if field.n_vertices != len(transition.parent):
        raise LevelMismatchError(
            f"field on {field.n_vertices} vertices, level {level} has {len(transition.parent)}"
        )
    values = transport_pool(field.values.to(DTYPE), field.signature, transition.tensors())
    return IrrepField(field.signature, values)


def unpool(field: IrrepField, hierarchy: Hierarchy, level: int) -> IrrepField:
    """Unpool a field on level `level + 1` back onto level `level`.

    Raises:
        LevelMismatchError: The field does not live on the coarser level.
    """
    transition = _transition(hierarchy, level)
    if field.n_vertices != transition.n_coarse:
        raise LevelMismatchError(
            f"field on {field.n_vertices} vertices, level {level + 1} has {transition.n_coarse}"
        )
    values = transport_unpool(field.values.to(DTYPE), field.signature, transition.tensors())
    return IrrepField(field.signature, values)
