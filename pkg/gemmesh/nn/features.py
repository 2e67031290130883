"""Rotation-equivariant input features and the ambient output head.

Three neighbourhood matrices are averaged over each vertex's radius-graph neighbours:

    m1 = mean v v^T,    m2 = mean n_q n_q^T,    m3 = mean v n_q^T,    v = x_q - x_p

Rotating the mesh conjugates all three. Expressed in the local frame (e1, e2, n) they split
into SO(2) irreps, which is the network input for gauge-equivariant models. Gauge-free models
read the flattened ambient components instead.
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import torch

from gemmesh.constants import DEFAULT_DISTANCE_SCALE, TRAIN_FLOW_RANGE
from gemmesh.errors import DisconnectedNeighborhoodError, SignatureMismatchError
from gemmesh.geometry.mesh import Mesh, NeighborGraph, geodesic_inlet_distance
from gemmesh.nn.irreps import IrrepField, IrrepSignature

SCALAR_CHANNELS = ("m1_nn", "m1_trace", "m2_nn", "m2_trace", "m3_nn", "m3_trace", "m3_curl")
VECTOR_CHANNELS = ("m1_tn", "m2_tn", "m3_tn", "m3_nt")
TENSOR_CHANNELS = ("m1_shear", "m2_shear", "m3_shear")
UPPER = np.triu_indices(3)


@dataclass(frozen=True, eq=False)
class FeaturePack:
    """Per-vertex neighbourhood matrices in ambient coordinates.

    Attributes:
        m1, m2, m3 (np.ndarray): (V, 3, 3); m1 and m2 symmetric.
        geodesic_distance (np.ndarray): (V,) distance from the inlet in mm.
        boundary_condition (float, optional): Inlet flow in ml/s.
    """

    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    geodesic_distance: np.ndarray
    boundary_condition: Optional[float] = None

    def rotated(self, rotation: np.ndarray) -> "FeaturePack":
        """Conjugate every matrix by a rotation, as a rigid motion of the mesh would."""

        def conjugate(m):
            return rotation @ m @ rotation.T

        return replace(self, m1=conjugate(self.m1), m2=conjugate(self.m2), m3=conjugate(self.m3))


def neighbourhood_means(graph: NeighborGraph, values: np.ndarray) -> np.ndarray:
    """Mean of per-pair values over each center's neighbours."""
    if (graph.degree == 0).any():
        vertex = int(np.flatnonzero(graph.degree == 0)[0])
        raise DisconnectedNeighborhoodError(f"vertex {vertex} has no neighbours")
    summed = np.add.reduceat(values, graph.indptr[:-1], axis=0)
    return summed / graph.degree.reshape((-1,) + (1,) * (values.ndim - 1))


def local_shape_features(
    mesh: Mesh,
    graph: NeighborGraph,
    normals: np.ndarray,
    boundary_condition: Optional[float] = None,
    geodesic_distance: Optional[np.ndarray] = None,
) -> FeaturePack:
    """Average the outer-product matrices over every radius-graph neighbourhood.

    Raises:
        DisconnectedNeighborhoodError: A vertex has no neighbours.
        NoInletError: No geodesic distance is given and the mesh has no inlet.
    """
    x = mesh.vertices
    centers, neighbors = graph.centers, graph.indices
    v = x[neighbors] - x[centers]
    n_q = normals[neighbors]
    m1 = neighbourhood_means(graph, v[:, :, None] * v[:, None, :])
    m2 = neighbourhood_means(graph, n_q[:, :, None] * n_q[:, None, :])
    m3 = neighbourhood_means(graph, v[:, :, None] * n_q[:, None, :])
    if geodesic_distance is None:
        geodesic_distance = geodesic_inlet_distance(mesh, None if mesh.n_faces else graph)
    return FeaturePack(m1, m2, m3, np.asarray(geodesic_distance), boundary_condition)


def rescale_flow(flow: float, flow_range=TRAIN_FLOW_RANGE) -> float:
    low, high = flow_range
    return (flow - low) / (high - low)


def irrep_signature(with_boundary_condition: bool) -> IrrepSignature:
    scalars = len(SCALAR_CHANNELS) + 1 + int(with_boundary_condition)
    return IrrepSignature(((0, scalars), (1, len(VECTOR_CHANNELS)), (2, len(TENSOR_CHANNELS))))


def _global_scalars(pack: FeaturePack, distance_scale: float, flow_range) -> list:
    columns = [pack.geodesic_distance / distance_scale]
    if pack.boundary_condition is not None:
        columns.append(
            np.full(len(pack.geodesic_distance), rescale_flow(pack.boundary_condition, flow_range))
        )
    return columns


def _scaled(pack: FeaturePack, length_scale: float) -> tuple:
    return pack.m1 / length_scale**2, pack.m2, pack.m3 / length_scale


def irrep_values(
    pack: FeaturePack,
    frames: np.ndarray,
    length_scale: float = 1.0,
    distance_scale: float = DEFAULT_DISTANCE_SCALE,
    flow_range=TRAIN_FLOW_RANGE,
) -> np.ndarray:
    """(V, dim) irrep components in each vertex's gauge, channel order fixed by this module."""
    scalars, vectors, tensors = [], [], []
    for name, matrix in zip(("m1", "m2", "m3"), _scaled(pack, length_scale)):
        local = frames @ matrix @ frames.transpose(0, 2, 1)
        tangent = local[:, :2, :2]
        scalars += [local[:, 2, 2], tangent[:, 0, 0] + tangent[:, 1, 1]]
        if name == "m3":
            scalars.append(0.5 * (tangent[:, 0, 1] - tangent[:, 1, 0]))
            vectors += [local[:, :2, 2], local[:, 2, :2]]
        else:
            vectors.append(local[:, :2, 2])
        tensors.append(
            np.column_stack(
                [
                    0.5 * (tangent[:, 0, 0] - tangent[:, 1, 1]),
                    0.5 * (tangent[:, 0, 1] + tangent[:, 1, 0]),
                ]
            )
        )
    scalars += _global_scalars(pack, distance_scale, flow_range)
    return np.concatenate(
        [
            np.column_stack(scalars),
            np.concatenate(vectors, axis=1),
            np.concatenate(tensors, axis=1),
        ],
        axis=1,
    )


def to_irrep_field(
    pack: FeaturePack,
    frames: np.ndarray,
    length_scale: float = 1.0,
    distance_scale: float = DEFAULT_DISTANCE_SCALE,
    flow_range=TRAIN_FLOW_RANGE,
) -> IrrepField:
    """Decompose the feature matrices into an irrep field in the given gauges.

    Args:
        pack (FeaturePack): Ambient neighbourhood matrices.
        frames (np.ndarray): (V, 3, 3) frames with rows e1, e2, n.
        length_scale (float): Lengths are divided by this (the level-0 radius).
        distance_scale (float): Geodesic distances are divided by this (mm).
        flow_range (tuple): Flow interval mapped onto [0, 1].
    """
    values = irrep_values(pack, frames, length_scale, distance_scale, flow_range)
    signature = irrep_signature(pack.boundary_condition is not None)
    return IrrepField(signature, torch.as_tensor(values, dtype=torch.float64))


def ambient_values(
    pack: FeaturePack,
    length_scale: float = 1.0,
    distance_scale: float = DEFAULT_DISTANCE_SCALE,
    flow_range=TRAIN_FLOW_RANGE,
) -> np.ndarray:
    """Flattened ambient components: m1 and m2 upper triangles, all of m3, then scalars."""
    m1, m2, m3 = _scaled(pack, length_scale)
    n = len(m1)
    columns = [m1[:, UPPER[0], UPPER[1]], m2[:, UPPER[0], UPPER[1]], m3.reshape(n, 9)]
    columns += [c[:, None] for c in _global_scalars(pack, distance_scale, flow_range)]
    return np.concatenate(columns, axis=1)


def ambient_width(with_boundary_condition: bool) -> int:
    return 6 + 6 + 9 + 1 + int(with_boundary_condition)


def output_signature(time_steps: int, vector: bool = True) -> IrrepSignature:
    if vector:
        return IrrepSignature(((0, time_steps), (1, time_steps)))
    return IrrepSignature.scalars(time_steps)


def frame_head(
    values: torch.Tensor, signature: IrrepSignature, frames: torch.Tensor, time_steps: int
) -> torch.Tensor:
    """Tensor form of output_head, returning (V, T, 3) vectors or (V, T, 1) scalars."""
    if signature == output_signature(time_steps, vector=False):
        return values[:, :, None]
    if signature != output_signature(time_steps, vector=True):
        raise SignatureMismatchError(
            f"output signature {signature} is not {time_steps}x0 + {time_steps}x1 or {time_steps}x0"
        )
    normal_part = values[:, :time_steps]
    tangent = values[:, time_steps:].reshape(-1, time_steps, 2)
    e1, e2, n = frames[:, 0], frames[:, 1], frames[:, 2]
    return (
        normal_part[..., None] * n[:, None]
        + tangent[..., 0:1] * e1[:, None]
        + tangent[..., 1:2] * e2[:, None]
    )


def output_head(field: IrrepField, frames, time_steps: int) -> torch.Tensor:
    """Express the final field in ambient coordinates: f0 n + f1x e1 + f1y e2 per time step.

    Raises:
        SignatureMismatchError: The field is not one m=0 plus one m=1 channel per time step
            (or one m=0 channel per step for scalar targets).
    """
    frames = torch.as_tensor(frames, dtype=field.values.dtype)
    return frame_head(field.values, field.signature, frames, time_steps)
