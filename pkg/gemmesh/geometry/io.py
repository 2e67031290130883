"""ASCII OBJ meshes, JSON marker sidecars and VTK legacy exports."""
import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from gemmesh.errors import InvalidMeshError
from gemmesh.geometry.mesh import Mesh, build_mesh

PathLike = Union[str, Path]


def write_obj(mesh: Mesh, path: PathLike) -> None:
    """Write v/f records only, with shortest round-trip float formatting."""
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in (mesh.faces + 1).tolist():
            fh.write(f"f {a} {b} {c}\n")


def read_obj(path: PathLike) -> tuple:
    """Read vertices and faces from an OBJ file, ignoring every other record.

    Returns:
        tuple: (vertices (V, 3) float array, faces (F, 3) zero-based int array)
    """
    vertices, faces = [], []
    with open(path) as fh:
        for number, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(value) for value in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise InvalidMeshError(f"{path}:{number} is not a triangle face")
                ids = [int(token.split("/")[0]) for token in parts[1:]]
                if min(ids) < 1:
                    raise InvalidMeshError(f"{path}:{number} uses a relative face index")
                faces.append([i - 1 for i in ids])
    return (
        np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
    )


def sidecar_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def write_sidecar(path: PathLike, mesh: Mesh, extra: Optional[dict] = None) -> None:
    """Write boundary markers (plus any extra fields) as the mesh's JSON sidecar."""
    data = {name: ids.tolist() for name, ids in sorted(mesh.markers.items())}
    data.update(extra or {})
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_sidecar(path: PathLike) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_mesh(path: PathLike) -> tuple:
    """Read an OBJ mesh plus its sidecar (when present).

    Returns:
        tuple: (Mesh, sidecar dict)
    """
    vertices, faces = read_obj(path)
    sidecar = {}
    if sidecar_path(path).exists():
        sidecar = read_sidecar(sidecar_path(path))
    else:
        logging.warning(f"No marker sidecar found for {path}, inlet distances are unavailable")
    markers = {
        name: sidecar[name] for name in ("inlet", "outlet") if name in sidecar
    }
    return build_mesh(vertices, faces, markers), sidecar


def write_vtk(
    path: PathLike,
    mesh: Mesh,
    vectors: Optional[dict] = None,
    scalars: Optional[dict] = None,
    title: str = "gemmesh field export",
) -> None:
    """Write a VTK legacy ASCII 3.0 POLYDATA file with point data.

    Args:
        path: Output file.
        mesh (Mesh): Geometry; point sets are written as VERTICES.
        vectors (dict, optional): Name to (V, 3) array.
        scalars (dict, optional): Name to (V,) array.
        title (str): Header line.
    """
    n = mesh.n_vertices
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA"]
    lines.append(f"POINTS {n} double")
    lines.extend(" ".join(repr(v) for v in row) for row in mesh.vertices.tolist())
    if mesh.n_faces:
        lines.append(f"POLYGONS {mesh.n_faces} {4 * mesh.n_faces}")
        lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist())
    else:
        lines.append(f"VERTICES {n} {2 * n}")
        lines.extend(f"1 {i}" for i in range(n))
    if vectors or scalars:
        lines.append(f"POINT_DATA {n}")
    for name, values in (vectors or {}).items():
        lines.append(f"VECTORS {name} double")
        lines.extend(" ".join(repr(v) for v in row) for row in np.asarray(values).tolist())
    for name, values in (scalars or {}).items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(repr(v) for v in np.asarray(values, dtype=np.float64).tolist())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
