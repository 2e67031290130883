"""Reference meshes and midpoint subdivision."""
import numpy as np

from gemmesh.geometry.mesh import INLET, OUTLET, Mesh, build_mesh

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0

ICOSAHEDRON_VERTICES = np.array(
    [
        (-1, GOLDEN, 0), (1, GOLDEN, 0), (-1, -GOLDEN, 0), (1, -GOLDEN, 0),
        (0, -1, GOLDEN), (0, 1, GOLDEN), (0, -1, -GOLDEN), (0, 1, -GOLDEN),
        (GOLDEN, 0, -1), (GOLDEN, 0, 1), (-GOLDEN, 0, -1), (-GOLDEN, 0, 1),
    ],
    dtype=np.float64,
)  # fmt: skip

ICOSAHEDRON_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)  # fmt: skip


def icosahedron() -> Mesh:
    """Regular icosahedron inscribed in the unit sphere."""
    vertices = ICOSAHEDRON_VERTICES / np.linalg.norm(ICOSAHEDRON_VERTICES, axis=1)[:, None]
    return build_mesh(vertices, ICOSAHEDRON_FACES)


def icosphere(subdivisions: int = 3) -> Mesh:
    """Unit sphere from repeated midpoint subdivision of the icosahedron."""
    mesh = icosahedron()
    for _ in range(subdivisions):
        refined = subdivide(mesh)
        vertices = refined.vertices / np.linalg.norm(refined.vertices, axis=1)[:, None]
        mesh = build_mesh(vertices, refined.faces)
    return mesh


def grid_patch(nx: int, ny: int, spacing: float = 1.0) -> Mesh:
    """Flat nx-by-ny vertex grid in the z=0 plane with +z normals."""
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing)
    vertices = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)])
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
    v00 = (i + j * nx).ravel()
    v10, v01, v11 = v00 + 1, v00 + nx, v00 + nx + 1
    faces = np.concatenate(
        [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])]
    )
    return build_mesh(vertices, faces)


def tube_faces(n_rings: int, segments: int, offset: int = 0) -> np.ndarray:
    """Triangulate consecutive rings of `segments` vertices each.

    Ring vertices must run counterclockwise about the tube's forward direction for the
    faces to point outwards.
    """
    j, i = np.meshgrid(np.arange(n_rings - 1), np.arange(segments), indexing="ij")
    a = offset + j * segments + i
    b = offset + j * segments + (i + 1) % segments
    c = a + segments
    d = b + segments
    return np.concatenate(
        [np.column_stack([a.ravel(), b.ravel(), c.ravel()]),
         np.column_stack([b.ravel(), d.ravel(), c.ravel()])]
    )  # fmt: skip


def cylinder(radius: float, length: float, segments: int, rings: int) -> Mesh:
    """Open straight tube along +x with inlet ring at x=0 and outlet ring at x=length."""
    phi = 2.0 * np.pi * np.arange(segments) / segments
    x = np.linspace(0.0, length, rings)
    vertices = np.column_stack(
        [
            np.repeat(x, segments),
            np.tile(radius * np.cos(phi), rings),
            np.tile(radius * np.sin(phi), rings),
        ]
    )
    markers = {
        INLET: np.arange(segments),
        OUTLET: np.arange((rings - 1) * segments, rings * segments),
    }
    return build_mesh(vertices, tube_faces(rings, segments), markers)


def subdivide(mesh: Mesh) -> Mesh:
    """Midpoint subdivision: one new vertex per edge, four faces per face.

    Midpoints of edges whose endpoints share a boundary tag inherit that tag.
    """
    n = mesh.n_vertices
    faces = mesh.faces
    directed = np.stack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=1)
    keys = np.sort(directed, axis=2)
    keys = keys[..., 0] * n + keys[..., 1]
    unique_keys, inverse = np.unique(keys.reshape(-1), return_inverse=True)
    midpoint_id = n + inverse.reshape(-1, 3)
    a, b = unique_keys // n, unique_keys % n
    vertices = np.concatenate([mesh.vertices, 0.5 * (mesh.vertices[a] + mesh.vertices[b])])

    ab, bc, ca = midpoint_id[:, 0], midpoint_id[:, 1], midpoint_id[:, 2]
    v0, v1, v2 = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.concatenate(
        [
            np.column_stack([v0, ab, ca]),
            np.column_stack([ab, v1, bc]),
            np.column_stack([ca, bc, v2]),
            np.column_stack([ab, bc, ca]),
        ]
    )
    markers = {}
    for name, ids in mesh.markers.items():
        tagged = np.zeros(n, dtype=bool)
        tagged[ids] = True
        both = np.flatnonzero(tagged[a] & tagged[b])
        markers[name] = np.concatenate([ids, n + both])
    return build_mesh(vertices, new_faces, markers)
