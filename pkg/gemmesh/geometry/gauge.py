"""Tangent frames (gauges), log-map angles and chord transport angles."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from gemmesh.constants import TWO_PI
from gemmesh.errors import DegenerateTangentError, ZeroProjectionError
from gemmesh.geometry.mesh import Mesh, NeighborGraph, vertex_normals

# Relative tangential length below which a direction counts as parallel to the normal
PARALLEL_TOL = 1e-9


def wrap_angle(angle: np.ndarray) -> np.ndarray:
    """Map angles into [0, 2pi)."""
    wrapped = np.mod(angle, TWO_PI)
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)


@dataclass(frozen=True, eq=False)
class GaugeAtlas:
    """Per-vertex frames plus log-map and transport angles for every directed pair.

    Attributes:
        frames (np.ndarray): (V, 3, 3), rows are e1, e2 and n with e1 x e2 = n.
        graph (NeighborGraph): The pairs the angles are defined on.
        log_angle (np.ndarray): theta_pq per pair, in [0, 2pi).
        log_radius (np.ndarray): ||x_q - x_p|| per pair, in mm.
        transport_angle (np.ndarray): g_{q->p} per pair, in [0, 2pi).
    """

    frames: np.ndarray
    graph: NeighborGraph
    log_angle: np.ndarray
    log_radius: np.ndarray
    transport_angle: np.ndarray

    @classmethod
    def from_frames(cls, positions: np.ndarray, frames: np.ndarray, graph: NeighborGraph):
        centers, neighbors = graph.centers, graph.indices
        theta = log_angles(positions, frames, centers, neighbors)
        transport = wrap_angle(theta + np.pi - theta[graph.reverse])
        radius = np.linalg.norm(positions[neighbors] - positions[centers], axis=1)
        return cls(frames, graph, theta, radius, transport)

    def pair_index(self, p: int, q: int) -> int:
        start, stop = self.graph.indptr[p], self.graph.indptr[p + 1]
        k = start + np.searchsorted(self.graph.indices[start:stop], q)
        if k >= stop or self.graph.indices[k] != q:
            raise KeyError(f"vertex {q} is not a neighbour of vertex {p}")
        return int(k)


def frames_from_tangents(normals: np.ndarray, tangents: np.ndarray) -> np.ndarray:
    """Build (e1, e2, n) frames from normals and a reference direction per vertex."""
    projected = tangents - np.sum(tangents * normals, axis=1, keepdims=True) * normals
    lengths = np.linalg.norm(projected, axis=1)
    scale = np.linalg.norm(tangents, axis=1)
    degenerate = np.flatnonzero(lengths <= PARALLEL_TOL * scale)
    if degenerate.size:
        raise DegenerateTangentError(
            f"reference direction at vertex {degenerate[0]} is parallel to its normal"
        )
    e1 = projected / lengths[:, None]
    e2 = np.cross(normals, e1)
    return np.stack([e1, e2, normals], axis=1)


def _reference_candidates(mesh: Mesh, graph: Optional[NeighborGraph]):
    """Ordered (vertex, neighbour) candidates for each vertex's reference direction."""
    if mesh.n_faces:
        faces = mesh.faces
        source = faces.reshape(-1)
        target = faces[:, [1, 2, 0]].reshape(-1)
        face_id = np.repeat(np.arange(len(faces)), 3)
        order = np.lexsort((face_id, source))
        return source[order], target[order]
    if graph is None:
        raise ValueError("a point set needs a radius graph to choose reference directions")
    return graph.centers, graph.indices


def build_gauges(
    mesh: Mesh,
    normals: Optional[np.ndarray] = None,
    seed: Optional[int] = None,
    graph: Optional[NeighborGraph] = None,
) -> np.ndarray:
    """Choose a tangent frame at every vertex.

    e1 is the tangent-plane projection of the first incident edge (in face order), falling back
    to the next incident edge when that one is parallel to the normal. Point sets use their
    first radius-graph neighbour instead.

    Args:
        mesh (Mesh): The mesh.
        normals (np.ndarray, optional): Vertex normals, computed when omitted.
        seed (int, optional): Rotate every frame by a random angle drawn from this seed.
        graph (NeighborGraph, optional): Needed for face-less point sets.

    Raises:
        DegenerateTangentError: No incident edge of a vertex leaves its normal direction.

    Returns:
        np.ndarray: (V, 3, 3) frames with rows e1, e2, n.
    """
    normals = vertex_normals(mesh) if normals is None else np.asarray(normals, dtype=np.float64)
    source, target = _reference_candidates(mesh, graph)
    x = mesh.vertices
    directions = x[target] - x[source]
    along = np.sum(directions * normals[source], axis=1)
    tangential = np.linalg.norm(directions - along[:, None] * normals[source], axis=1)
    usable = tangential > PARALLEL_TOL * np.linalg.norm(directions, axis=1)

    # first usable candidate per vertex (candidates are grouped by source vertex)
    chosen = np.full(mesh.n_vertices, -1, dtype=np.int64)
    usable_idx = np.flatnonzero(usable)
    vertices, first = np.unique(source[usable_idx], return_index=True)
    chosen[vertices] = usable_idx[first]
    missing = np.flatnonzero(chosen < 0)
    if missing.size:
        raise DegenerateTangentError(
            f"vertex {missing[0]} has no incident edge outside its normal direction"
        )
    skipped = np.count_nonzero(~usable)
    if skipped:
        logging.debug(f"Skipped {skipped} reference edges parallel to the vertex normal")

    frames = frames_from_tangents(normals, directions[chosen])
    if seed is not None:
        frames = rotate_gauges(frames, random_gauge_angles(mesh.n_vertices, seed))
    return frames


def random_gauge_angles(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, TWO_PI, size=n)


def rotate_gauges(frames: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotate each frame's e1/e2 about its normal by the given angles."""
    c, s = np.cos(angles)[:, None], np.sin(angles)[:, None]
    e1, e2, n = frames[:, 0], frames[:, 1], frames[:, 2]
    return np.stack([c * e1 + s * e2, -s * e1 + c * e2, n], axis=1)


def log_angles(
    positions: np.ndarray, frames: np.ndarray, centers: np.ndarray, neighbors: np.ndarray
) -> np.ndarray:
    """theta_pq of the chord x_q - x_p in the tangent frame at p; 0 for p == q.

    Raises:
        ZeroProjectionError: A chord is parallel to the normal at its center.
    """
    chord = positions[neighbors] - positions[centers]
    a = np.einsum("ij,ij->i", chord, frames[centers, 0])
    b = np.einsum("ij,ij->i", chord, frames[centers, 1])
    length = np.linalg.norm(chord, axis=1)
    same = centers == neighbors
    parallel = np.flatnonzero(~same & (np.hypot(a, b) <= PARALLEL_TOL * length))
    if parallel.size:
        e = parallel[0]
        raise ZeroProjectionError(
            f"chord from vertex {centers[e]} to {neighbors[e]} is parallel to the normal"
        )
    return np.where(same, 0.0, wrap_angle(np.arctan2(b, a)))


def chord_transport(
    positions: np.ndarray, frames: np.ndarray, centers: np.ndarray, neighbors: np.ndarray
) -> np.ndarray:
    """g_{q->p} = theta_pq + pi - theta_qp for arbitrary pairs (0 for p == q)."""
    forward = log_angles(positions, frames, centers, neighbors)
    backward = log_angles(positions, frames, neighbors, centers)
    same = centers == neighbors
    return np.where(same, 0.0, wrap_angle(forward + np.pi - backward))


def log_map(atlas: GaugeAtlas, p: int, q: int) -> tuple:
    """(theta_pq, r_pq) for a neighbour q of p."""
    k = atlas.pair_index(p, q)
    return float(atlas.log_angle[k]), float(atlas.log_radius[k])


def transport_angle(atlas: GaugeAtlas, p: int, q: int) -> float:
    """g_{q->p}, the rotation carrying q's gauge onto p's gauge along the chord."""
    return float(atlas.transport_angle[atlas.pair_index(p, q)])
