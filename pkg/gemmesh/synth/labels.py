"""Poiseuille proxy labels (wall shear stress and pressure) and their files on disk."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from gemmesh.constants import (
    BIFURCATION_EXPONENT,
    BLOOD_VISCOSITY,
    BRANCH_NAMES,
    DMV,
    DYN_PER_CM2_TO_KPA,
    DYN_PER_CM2_TO_PA,
    FLOW_LIMITS,
    MAIN,
    MM_PER_CM,
    OUTLET_PRESSURE_KPA,
    SB,
    TWO_PI,
)
from gemmesh.errors import FlowRangeError, RadiusUnderflowError, ShapeMismatchError
from gemmesh.geometry.io import load_mesh, sidecar_path, write_obj, write_sidecar
from gemmesh.geometry.mesh import Mesh, vertex_normals
from gemmesh.synth.loft import RingTable
from gemmesh.synth.spec import ArterySpec, GeneratedArtery

PathLike = Union[str, Path]
WSS_COLUMNS = ["tau_x", "tau_y", "tau_z"]
PRESSURE_COLUMNS = ["pressure"]
# diastolic floor of the raised-cosine pulse, relative to its peak excursion
WAVEFORM_BASE = 0.5
TANGENT_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class LabeledMesh:
    """A generated mesh with both proxy targets.

    Attributes:
        mesh (Mesh): Wall mesh with inlet/outlet markers.
        wss (np.ndarray): (V, T, 3) wall shear stress in Pa.
        pressure (np.ndarray): (V, T, 1) pressure in kPa.
        spec (ArterySpec): Generative parameters.
        rings (RingTable): Centerline samples the labels were computed from.
    """

    mesh: Mesh
    wss: np.ndarray
    pressure: np.ndarray
    spec: ArterySpec
    rings: RingTable

    def label(self, target: str) -> np.ndarray:
        return self.wss if target == "wss" else self.pressure


def waveform(time_steps: int) -> np.ndarray:
    """Positive raised-cosine pulse over one heartbeat, scaled to unit mean."""
    phase = TWO_PI * np.arange(time_steps) / time_steps
    pulse = WAVEFORM_BASE + 0.5 * (1.0 - np.cos(phase))
    return pulse / pulse.mean()


def branch_flows(spec: ArterySpec, flow: float) -> dict:
    """Inlet flow split between the children proportionally to d^2.4."""
    if spec.kind == "single":
        return {MAIN: flow}
    a = BIFURCATION_EXPONENT
    share = spec.radii.dmv**a / (spec.radii.dmv**a + spec.radii.sb**a)
    return {MAIN: flow, DMV: flow * share, SB: flow * (1.0 - share)}


def _ring_flows(rings: RingTable, flows: dict) -> np.ndarray:
    return np.array([flows[int(b)] for b in rings.branch])


def _check_radii(rings: RingTable) -> np.ndarray:
    bad = np.flatnonzero(rings.radius <= 0)
    if bad.size:
        i = bad[0]
        raise RadiusUnderflowError(
            f"ring {i} at s={rings.s[i]:.3f} mm has radius {rings.radius[i]}"
        )
    return rings.radius / MM_PER_CM


def wall_directions(
    mesh: Mesh, rings: RingTable, normals: Optional[np.ndarray] = None
) -> np.ndarray:
    """Centerline tangents projected onto each vertex's tangent plane, normalized.

    Vertices where the tangent is (nearly) normal to the wall get a zero direction.
    """
    normals = vertex_normals(mesh) if normals is None else normals
    tangent = rings.tangent[rings.vertex_ring]
    projected = tangent - np.sum(tangent * normals, axis=1, keepdims=True) * normals
    norm = np.linalg.norm(projected, axis=1, keepdims=True)
    return np.divide(projected, norm, out=np.zeros_like(projected), where=norm > TANGENT_EPS)


def wss_magnitude(rings: RingTable, flows: dict) -> np.ndarray:
    """Per-ring Poiseuille wall shear stress 4 mu Q / (pi r^3) in Pa for unit waveform."""
    r_cm = _check_radii(rings)
    q = _ring_flows(rings, flows)
    return 4.0 * BLOOD_VISCOSITY * q / (np.pi * r_cm**3) * DYN_PER_CM2_TO_PA


def pressure_drop(rings: RingTable, flows: dict) -> np.ndarray:
    """Per-ring pressure above the outlet pressure in kPa for unit waveform.

    The Poiseuille gradient 8 mu Q / (pi r^4) is integrated upstream from each
    outlet. Parent vessels start from the mean of their children's first rings.
    """
    r_cm = _check_radii(rings)
    gradient = 8.0 * BLOOD_VISCOSITY * _ring_flows(rings, flows) / (np.pi * r_cm**4)
    drop = np.zeros(len(r_cm))

    def integrate(branch_id, base):
        index = np.flatnonzero(rings.branch == branch_id)
        index = index[np.argsort(rings.s[index])]
        s_cm = rings.s[index] / MM_PER_CM
        g = gradient[index]
        pieces = 0.5 * (g[1:] + g[:-1]) * np.diff(s_cm)
        upstream = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
        drop[index] = base + upstream
        return drop[index[0]]

    children = [b for b in (DMV, SB) if np.any(rings.branch == b)]
    starts = [integrate(b, 0.0) for b in children]
    integrate(MAIN, float(np.mean(starts)) if starts else 0.0)
    return drop * DYN_PER_CM2_TO_KPA


def proxy_labels(
    spec: ArterySpec,
    mesh: Mesh,
    rings: RingTable,
    flow: Optional[float] = None,
    time_steps: Optional[int] = None,
) -> LabeledMesh:
    """Wall shear stress and pressure labels from the Poiseuille surrogate.

    Args:
        spec (ArterySpec): Generative parameters, also the default flow and time steps.
        mesh (Mesh): Wall mesh lofted from `rings`.
        rings (RingTable): Centerline samples with the ring of every vertex.
        flow (float, optional): Mean inlet flow in ml/s.
        time_steps (int, optional): Samples of the cardiac cycle.

    Raises:
        FlowRangeError: The inlet flow lies outside the supported range.
        RadiusUnderflowError: A ring has a non-positive radius.

    Returns:
        LabeledMesh: The mesh with (V, T, 3) WSS in Pa and (V, T, 1) pressure in kPa.
    """
    flow = spec.flow if flow is None else flow
    time_steps = spec.time_steps if time_steps is None else time_steps
    low, high = FLOW_LIMITS
    if not low <= flow <= high:
        raise FlowRangeError(f"inlet flow {flow} ml/s outside [{low}, {high}]")
    if len(rings.vertex_ring) != mesh.n_vertices:
        raise ShapeMismatchError(
            f"ring table covers {len(rings.vertex_ring)} vertices, mesh has {mesh.n_vertices}"
        )
    w = waveform(time_steps)
    flows = branch_flows(spec, flow)
    magnitude = wss_magnitude(rings, flows)[rings.vertex_ring]
    direction = wall_directions(mesh, rings)
    wss = magnitude[:, None, None] * w[None, :, None] * direction[:, None, :]
    drop = pressure_drop(rings, flows)[rings.vertex_ring]
    pressure = (OUTLET_PRESSURE_KPA + drop[:, None] * w[None, :])[..., None]
    split = ", ".join(f"{BRANCH_NAMES[b]} {q:.3f}" for b, q in flows.items())
    logging.debug(
        f"Labels for seed {spec.seed}: flow {split} ml/s, "
        f"|wss| up to {magnitude.max():.3f} Pa, pressure up to {pressure.max():.3f} kPa"
    )
    return LabeledMesh(mesh, wss, pressure, spec, rings)


def label_path(path: PathLike, target: str) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_{target}.csv")


def label_frame(values: np.ndarray, columns: list) -> pd.DataFrame:
    """Long table with one row per (vertex, time step)."""
    n_vertices, time_steps, _ = values.shape
    frame = pd.DataFrame(values.reshape(n_vertices * time_steps, -1), columns=columns)
    frame.insert(0, "t", np.tile(np.arange(time_steps), n_vertices))
    frame.insert(0, "vertex", np.repeat(np.arange(n_vertices), time_steps))
    return frame


def write_labels(path: PathLike, wss: np.ndarray, pressure: np.ndarray) -> list:
    """Write both label CSVs next to the OBJ at `path`."""
    written = []
    tables = {"wss": (wss, WSS_COLUMNS), "pressure": (pressure, PRESSURE_COLUMNS)}
    for target, (values, columns) in tables.items():
        out = label_path(path, target)
        label_frame(values, columns).to_csv(out, index=False)
        written.append(out)
    return written


def read_labels(path: PathLike, target: str, n_vertices: int) -> np.ndarray:
    """Read the `target` label CSV belonging to the OBJ at `path` as (V, T, C).

    Raises:
        ShapeMismatchError: The table is missing rows or vertices.
    """
    columns = WSS_COLUMNS if target == "wss" else PRESSURE_COLUMNS
    csv = label_path(path, target)
    if not csv.exists():
        raise ShapeMismatchError(f"missing label file {csv}")
    frame = pd.read_csv(csv).sort_values(["vertex", "t"])
    missing = [c for c in ["vertex", "t", *columns] if c not in frame.columns]
    if missing:
        raise ShapeMismatchError(f"{csv} lacks columns {missing}")
    time_steps = int(frame["t"].max()) + 1 if len(frame) else 0
    if len(frame) != n_vertices * time_steps or frame["vertex"].nunique() != n_vertices:
        raise ShapeMismatchError(
            f"{csv} has {len(frame)} rows, expected {n_vertices} vertices x {time_steps} steps"
        )
    return frame[columns].to_numpy(dtype=np.float64).reshape(n_vertices, time_steps, len(columns))


def save_labeled(path: PathLike, labeled: LabeledMesh) -> list:
    """Write OBJ, JSON sidecar and both label CSVs; returns every written path."""
    path = Path(path)
    write_obj(labeled.mesh, path)
    sidecar = sidecar_path(path)
    write_sidecar(
        sidecar,
        labeled.mesh,
        {
            "spec": labeled.spec.model_dump(mode="json"),
            "flow": labeled.spec.flow,
            "time_steps": labeled.spec.time_steps,
            "rings": labeled.rings.to_dict(),
        },
    )
    return [path, sidecar, *write_labels(path, labeled.wss, labeled.pressure)]


def load_labeled(path: PathLike) -> LabeledMesh:
    """Read a mesh written by save_labeled, re-validating its spec."""
    mesh, sidecar = load_mesh(path)
    spec = ArterySpec.model_validate(sidecar["spec"])
    rings = RingTable.from_dict(sidecar["rings"])
    wss = read_labels(path, "wss", mesh.n_vertices)
    pressure = read_labels(path, "pressure", mesh.n_vertices)
    return LabeledMesh(mesh, wss, pressure, spec, rings)


def label_artery(artery: GeneratedArtery) -> LabeledMesh:
    return proxy_labels(artery.spec, artery.mesh, artery.rings)
