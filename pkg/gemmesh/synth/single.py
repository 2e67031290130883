"""Single coronary segments: a planar wiggly centerline with up to two stenoses."""
import logging
from typing import Optional

import numpy as np

from gemmesh.constants import (
    FLOW_EXTENSION_DIAMETERS,
    MAIN,
    MAX_SUBSEED_ATTEMPTS,
    SINGLE_CONTROL_POINTS,
    SINGLE_CONTROL_SPACING,
    SINGLE_MAX_SEVERITY,
    SINGLE_MAX_STENOSES,
    SINGLE_RADIUS_RANGE,
    SINGLE_VERTICAL_STEP,
    TRAIN_FLOW_RANGE,
    TWO_PI,
)
from gemmesh.errors import SelfIntersectionError
from gemmesh.geometry.mesh import INLET, OUTLET, build_mesh
from gemmesh.geometry.primitives import tube_faces
from gemmesh.synth.loft import (
    Centerline,
    RingTable,
    circle_offsets,
    ring_stations,
    rotation_minimizing_frames,
)
from gemmesh.synth.spec import ArterySpec, GeneratedArtery, Stenosis

# rings closer to self-intersection than this are rejected
CURVATURE_LIMIT = 0.9
RMF_REFERENCE = np.array([0.0, 1.0, 0.0])


def sample_single_spec(
    seed: int,
    attempt: int = 0,
    segments: int = 32,
    spacing: Optional[float] = None,
    flow: Optional[float] = None,
    flow_range: tuple = TRAIN_FLOW_RANGE,
    time_steps: int = 1,
) -> ArterySpec:
    """Draw the generative parameters of one single artery.

    Control points sit at fixed 4 mm increments along x with a random walk in y. The
    stenoses are placed on the spline (without its flow extensions).
    """
    rng = np.random.default_rng([seed, attempt])
    x = SINGLE_CONTROL_SPACING * np.arange(SINGLE_CONTROL_POINTS)
    steps = rng.uniform(-SINGLE_VERTICAL_STEP, SINGLE_VERTICAL_STEP, SINGLE_CONTROL_POINTS - 1)
    y = np.concatenate([[0.0], np.cumsum(steps)])
    points = np.column_stack([x, y, np.zeros_like(x)])
    radius = float(rng.uniform(*SINGLE_RADIUS_RANGE))

    length = Centerline(points).length
    stenoses = []
    for _ in range(int(rng.integers(0, SINGLE_MAX_STENOSES + 1))):
        stenoses.append(
            Stenosis(
                position=float(rng.uniform(0.2 * length, 0.8 * length)),
                severity=float(rng.uniform(0.0, SINGLE_MAX_SEVERITY)),
                asymmetry=float(rng.uniform(0.0, 1.0)),
                length=float(rng.uniform(2.0, 4.0) * radius),
            )
        )
    if flow is None:
        flow = float(rng.uniform(*flow_range))
    return ArterySpec(
        kind="single",
        seed=seed,
        attempt=attempt,
        segments=segments,
        spacing=spacing,
        control_points=points.tolist(),
        radius=radius,
        stenoses=sorted(stenoses, key=lambda st: st.position),
        flow=flow,
        time_steps=time_steps,
    )


def stenosis_profile(spec: ArterySpec, s: np.ndarray) -> tuple:
    """Relative narrowing and relative centre offset at arc lengths `s`.

    Each stenosis is a raised-cosine bump. Overlapping bumps add up but the total
    narrowing is capped at the maximum severity.

    Returns:
        tuple: (narrowing (R,), offset (R,)) as fractions of the base radius.
    """
    s = np.asarray(s, dtype=np.float64)
    narrowing = np.zeros_like(s)
    offset = np.zeros_like(s)
    for st in spec.stenoses:
        half = 0.5 * st.length
        inside = np.abs(s - st.position) < half
        bump = np.where(inside, 0.5 * (1.0 + np.cos(np.pi * (s - st.position) / half)), 0.0)
        narrowing += st.severity * bump
        offset += st.severity * bump * (1.0 - 2.0 * st.asymmetry)
    capped = np.minimum(narrowing, SINGLE_MAX_SEVERITY)
    scale = np.divide(capped, narrowing, out=np.ones_like(s), where=narrowing > 0)
    return capped, offset * scale


def build_single(spec: ArterySpec) -> tuple:
    """Loft the tube described by a single-artery spec.

    Asymmetric stenoses shift the ring centre within the centerline plane so one wall
    (top or bottom) narrows more than the other.

    Raises:
        SelfIntersectionError: The spline bends tighter than the local lumen radius.

    Returns:
        tuple: (Mesh, RingTable)
    """
    radius = spec.radius
    extension = FLOW_EXTENSION_DIAMETERS * 2.0 * radius
    line = Centerline(np.asarray(spec.control_points), before=extension, after=extension)
    spacing = spec.spacing or TWO_PI / spec.segments

    def local_radius(s):
        return radius * (1.0 - stenosis_profile(spec, np.atleast_1d(s))[0])

    stations = ring_stations(
        line.start,
        line.stop,
        lambda s: spacing * float(local_radius(s)[0]),
        forced=[st.position for st in spec.stenoses],
    )
    narrowing, shift = stenosis_profile(spec, stations)
    radii = radius * (1.0 - narrowing)
    bend = line.curvature(stations) * radii
    if bend.max() >= CURVATURE_LIMIT:
        i = int(np.argmax(bend))
        raise SelfIntersectionError(
            f"ring at s={stations[i]:.3f} mm bends with curvature*radius={bend[i]:.3f}"
        )

    tangents = line.tangent(stations)
    frames = rotation_minimizing_frames(line.point(stations), tangents, RMF_REFERENCE)
    centers = line.point(stations) + (radius * shift)[:, None] * frames[:, 0]
    offsets = circle_offsets(frames, radii, spec.segments)
    vertices = (centers[:, None, :] + offsets).reshape(-1, 3)

    n_rings, n = len(stations), spec.segments
    markers = {INLET: np.arange(n), OUTLET: np.arange((n_rings - 1) * n, n_rings * n)}
    mesh = build_mesh(vertices, tube_faces(n_rings, n), markers)
    rings = RingTable(
        branch=np.full(n_rings, MAIN),
        s=stations,
        center=centers,
        tangent=tangents,
        radius=radii,
        vertex_ring=np.repeat(np.arange(n_rings), n),
    )
    return mesh, rings


def synth_single(
    seed: int,
    segments: int = 32,
    spacing: Optional[float] = None,
    flow: Optional[float] = None,
    flow_range: tuple = TRAIN_FLOW_RANGE,
    time_steps: int = 1,
) -> GeneratedArtery:
    """Generate one single artery, moving to the next sub-seed on self-intersection.

    Args:
        seed (int): Sample seed.
        segments (int): Vertices per ring.
        spacing (float, optional): Axial ring spacing relative to the local radius.
        flow (float, optional): Inlet flow in ml/s, drawn from `flow_range` when omitted.
        flow_range (tuple): Bounds for the drawn flow.
        time_steps (int): Samples of the cardiac cycle in the labels.

    Raises:
        SelfIntersectionError: No valid geometry within the sub-seed budget.

    Returns:
        GeneratedArtery: spec, mesh and ring table.
    """
    for attempt in range(MAX_SUBSEED_ATTEMPTS):
        spec = sample_single_spec(seed, attempt, segments, spacing, flow, flow_range, time_steps)
        try:
            mesh, rings = build_single(spec)
        except SelfIntersectionError as e:
            logging.warning(f"Seed {seed} attempt {attempt}: {e}, trying the next sub-seed")
            continue
        logging.debug(
            f"Single artery seed={seed}: r={spec.radius:.3f} mm, "
            f"{len(spec.stenoses)} stenoses, {mesh.n_vertices} vertices"
        )
        return GeneratedArtery(spec, mesh, rings)
    raise SelfIntersectionError(f"seed {seed} self-intersects for {MAX_SUBSEED_ATTEMPTS} sub-seeds")
