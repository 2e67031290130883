"""Triangle meshes, vertex normals, radius graphs and inlet distances."""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from gemmesh.errors import (
    DegenerateFaceError,
    DisconnectedNeighborhoodError,
    InconsistentOrientationError,
    InvalidMeshError,
    NoInletError,
    NonManifoldError,
    UnreachableVertexError,
    ZeroNormalError,
)

INLET = "inlet"
OUTLET = "outlet"
WALL = "wall"


@dataclass(frozen=True, eq=False)
class Mesh:
    """An immutable triangle mesh (or, without faces, an oriented point set).

    Attributes:
        vertices (np.ndarray): (V, 3) positions in mm.
        faces (np.ndarray): (F, 3) counterclockwise vertex-index triples. Empty for point sets.
        markers (dict): Boundary tag name ("inlet", "outlet") to sorted vertex ids.
        normals (np.ndarray, optional): Explicit unit normals, required for point sets.
    """

    vertices: np.ndarray
    faces: np.ndarray
    markers: dict = field(default_factory=dict)
    normals: Optional[np.ndarray] = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def inlet(self) -> np.ndarray:
        return self.markers.get(INLET, np.zeros(0, dtype=np.int64))

    @property
    def outlet(self) -> np.ndarray:
        return self.markers.get(OUTLET, np.zeros(0, dtype=np.int64))

    def vertex_tags(self) -> np.ndarray:
        tags = np.full(self.n_vertices, WALL, dtype=object)
        tags[self.outlet] = OUTLET
        tags[self.inlet] = INLET
        return tags

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (E, 2) vertex pairs."""
        if not self.n_faces:
            return np.zeros((0, 2), dtype=np.int64)
        directed = _directed_edges(self.faces)
        return np.unique(np.sort(directed, axis=1), axis=0)

    def transformed(self, rotation: np.ndarray, translation=None) -> "Mesh":
        """Apply x -> R x + t, rotating any explicit normals with R."""
        rotation = np.asarray(rotation, dtype=np.float64)
        vertices = self.vertices @ rotation.T
        if translation is not None:
            vertices = vertices + np.asarray(translation, dtype=np.float64)
        normals = None if self.normals is None else self.normals @ rotation.T
        return Mesh(vertices, self.faces, dict(self.markers), normals)


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Symmetric radius graph stored as CSR adjacency with sorted neighbour lists.

    Directed pairs are enumerated in CSR order: pair e has center `centers[e]` (the
    receiving vertex p) and neighbour `indices[e]` (the sending vertex q).
    """

    radius: float
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_pairs(self) -> int:
        return len(self.indices)

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def centers(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_vertices), self.degree)

    @cached_property
    def reverse(self) -> np.ndarray:
        """Index of pair (q, p) for every pair (p, q)."""
        n = self.n_vertices
        keys = self.centers * n + self.indices
        return np.searchsorted(keys, self.indices * n + self.centers)

    def neighbors(self, p: int) -> np.ndarray:
        return self.indices[self.indptr[p] : self.indptr[p + 1]]


def _directed_edges(faces: np.ndarray) -> np.ndarray:
    return np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])


def face_cross_products(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unnormalized face normals, with length twice the face area."""
    v0, v1, v2 = (vertices[faces[:, k]] for k in range(3))
    return np.cross(v1 - v0, v2 - v0)


def _validate_markers(markers: Optional[dict], n_vertices: int) -> dict:
    checked = {}
    for name, ids in (markers or {}).items():
        ids = np.unique(np.asarray(ids, dtype=np.int64))
        if ids.size and (ids[0] < 0 or ids[-1] >= n_vertices):
            raise InvalidMeshError(f"marker '{name}' references a vertex outside [0, {n_vertices})")
        checked[name] = ids
    return checked


def build_mesh(vertices, faces, markers: Optional[dict] = None) -> Mesh:
    """Validate vertices and faces and return a Mesh.

    Args:
        vertices: (V, 3) vertex positions in mm.
        faces: (F, 3) vertex-index triples with counterclockwise winding.
        markers (dict, optional): Boundary tags, e.g. {"inlet": [...], "outlet": [...]}.

    Raises:
        InvalidMeshError: Empty input, bad shapes or out-of-range indices.
        DegenerateFaceError: A face has zero area or a repeated index.
        NonManifoldError: An edge is shared by more than two faces.
        InconsistentOrientationError: Two faces traverse an edge in the same direction.

    Returns:
        Mesh: The validated mesh.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3 or not len(vertices):
        raise InvalidMeshError("vertices must be a non-empty (V, 3) array")
    if faces.ndim != 2 or faces.shape[1] != 3 or not len(faces):
        raise InvalidMeshError("faces must be a non-empty (F, 3) array")
    if not np.isfinite(vertices).all():
        raise InvalidMeshError("vertices contain non-finite coordinates")

    n = len(vertices)
    out_of_range = np.flatnonzero(((faces < 0) | (faces >= n)).any(axis=1))
    if out_of_range.size:
        i = out_of_range[0]
        raise InvalidMeshError(f"face {i} {faces[i].tolist()} references a vertex outside [0, {n})")

    repeated = (
        (faces[:, 0] == faces[:, 1])
        | (faces[:, 1] == faces[:, 2])
        | (faces[:, 0] == faces[:, 2])
    )
    areas = 0.5 * np.linalg.norm(face_cross_products(vertices, faces), axis=1)
    scale = max(float(np.ptp(vertices, axis=0).max()), np.finfo(float).tiny)
    degenerate = np.flatnonzero(repeated | (areas <= 1e-12 * scale**2))
    if degenerate.size:
        i = degenerate[0]
        raise DegenerateFaceError(f"face {i} {faces[i].tolist()} has zero area")

    directed = _directed_edges(faces)
    undirected, counts = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
    shared = np.flatnonzero(counts > 2)
    if shared.size:
        edge = undirected[shared[0]]
        raise NonManifoldError(
            f"edge {tuple(edge.tolist())} is shared by {counts[shared[0]]} faces"
        )
    arcs, arc_counts = np.unique(directed, axis=0, return_counts=True)
    repeated_arcs = np.flatnonzero(arc_counts > 1)
    if repeated_arcs.size:
        edge = arcs[repeated_arcs[0]]
        raise InconsistentOrientationError(
            f"edge {tuple(edge.tolist())} is traversed in the same direction by two faces"
        )

    logging.debug(f"Validated mesh with {n} vertices and {len(faces)} faces")
    return Mesh(vertices, faces, _validate_markers(markers, n))


def build_point_set(vertices, normals, markers: Optional[dict] = None) -> Mesh:
    """Return a face-less Mesh carrying explicit unit normals."""
    vertices = np.asarray(vertices, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    if vertices.ndim != 2 or vertices.shape[1] != 3 or not len(vertices):
        raise InvalidMeshError("vertices must be a non-empty (V, 3) array")
    if normals.shape != vertices.shape:
        raise InvalidMeshError("normals must match the vertex array shape")
    lengths = np.linalg.norm(normals, axis=1)
    if (lengths <= 0).any():
        raise ZeroNormalError(f"vertex {int(np.argmin(lengths))} has a zero normal")
    return Mesh(
        vertices,
        np.zeros((0, 3), dtype=np.int64),
        _validate_markers(markers, len(vertices)),
        normals / lengths[:, None],
    )


def vertex_normals(mesh: Mesh) -> np.ndarray:
    """Area-weighted vertex normals.

    Args:
        mesh (Mesh): A validated mesh. Point sets return their explicit normals.

    Raises:
        ZeroNormalError: The incident face normals of a vertex cancel (or it has none).

    Returns:
        np.ndarray: (V, 3) unit normals.
    """
    if mesh.normals is not None:
        return mesh.normals.copy()
    cross = face_cross_products(mesh.vertices, mesh.faces)
    accumulated = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(accumulated, mesh.faces[:, k], cross)
    lengths = np.linalg.norm(accumulated, axis=1)
    tolerance = 1e-12 * np.linalg.norm(cross, axis=1).max()
    zero = np.flatnonzero(lengths <= tolerance)
    if zero.size:
        raise ZeroNormalError(f"vertex {zero[0]} has cancelling or no incident face normals")
    return accumulated / lengths[:, None]


def mean_edge_length(mesh: Mesh) -> float:
    """Mean mesh edge length, or the mean nearest-neighbour spacing of a point set."""
    if mesh.n_faces:
        a, b = mesh.edges[:, 0], mesh.edges[:, 1]
        return float(np.linalg.norm(mesh.vertices[a] - mesh.vertices[b], axis=1).mean())
    distances, _ = cKDTree(mesh.vertices).query(mesh.vertices, k=2)
    return float(distances[:, 1].mean())


def radius_graph_points(points: np.ndarray, radius: float) -> NeighborGraph:
    """Radius graph over arbitrary points, excluding self-loops.

    Raises:
        DisconnectedNeighborhoodError: Some point has no neighbour within the radius.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    centers = np.concatenate([pairs[:, 0], pairs[:, 1]]).astype(np.int64)
    neighbors = np.concatenate([pairs[:, 1], pairs[:, 0]]).astype(np.int64)
    order = np.lexsort((neighbors, centers))
    counts = np.bincount(centers, minlength=n)
    isolated = np.flatnonzero(counts == 0)
    if isolated.size:
        raise DisconnectedNeighborhoodError(
            f"vertex {isolated[0]} has no neighbour within radius {radius:g} mm"
        )
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return NeighborGraph(float(radius), indptr, neighbors[order])


def radius_graph(mesh: Mesh, radius: float) -> NeighborGraph:
    """All vertex pairs with ||x_q - x_p|| <= radius."""
    return radius_graph_points(mesh.vertices, radius)


def geodesic_inlet_distance(mesh: Mesh, graph: Optional[NeighborGraph] = None) -> np.ndarray:
    """Multi-source Dijkstra distance (mm) from the inlet vertices.

    Meshes use their edge graph; point sets fall back to the radius graph.

    Raises:
        NoInletError: The mesh carries no inlet marker.
        UnreachableVertexError: A vertex is not connected to any inlet vertex.
    """
    inlet = mesh.inlet
    if not inlet.size:
        raise NoInletError("mesh has no inlet vertices, add them to the marker sidecar")
    if mesh.n_faces:
        a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    elif graph is not None:
        keep = graph.centers < graph.indices
        a, b = graph.centers[keep], graph.indices[keep]
    else:
        raise NoInletError("a point set needs a radius graph to measure inlet distances")
    weights = np.linalg.norm(mesh.vertices[a] - mesh.vertices[b], axis=1)
    n = mesh.n_vertices
    adjacency = coo_matrix((weights, (a, b)), shape=(n, n)).tocsr()
    distance = dijkstra(adjacency, directed=False, indices=inlet, min_only=True)
    unreachable = np.flatnonzero(~np.isfinite(distance))
    if unreachable.size:
        raise UnreachableVertexError(
            f"vertex {unreachable[0]} cannot be reached from any inlet vertex"
        )
    return distance
