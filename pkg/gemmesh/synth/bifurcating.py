"""Bifurcating coronary segments (PMV, DMV and side branch) by rejection sampling.

The parent vessel runs along +z. Control points are 4 mm apart and the side branch
leaves at the fourth point. Segment k points in the direction given by an in-plane
angle a_k (towards +y) and an out-of-plane tilt c_k (towards +x), both growing linearly
from zero at the first segment so that segment four carries the full angle.
"""
import logging
from typing import Optional

import numpy as np

from gemmesh.constants import (
    BETA,
    BETA_PRIME,
    BIFURCATION_BRANCH_POINT,
    BIFURCATION_CONTROL_POINTS,
    BIFURCATION_CONTROL_SPACING,
    BIFURCATION_EXPONENT,
    BIFURCATION_TOLERANCE,
    DMV,
    ELLIPSE_NOISE,
    GAMMA,
    MAIN,
    MAX_ANGLE,
    MIN_RADIUS,
    MM_PER_CM,
    RADIUS_DMV,
    RADIUS_PMV,
    RADIUS_SB,
    REJECTION_BUDGET,
    SB,
    TAPER,
    TRAIN_FLOW_RANGE,
    TWO_PI,
)
from gemmesh.errors import RejectionBudgetExceededError
from gemmesh.geometry.mesh import INLET, OUTLET, build_mesh
from gemmesh.synth.loft import (
    Centerline,
    RingTable,
    align_frames,
    circle_offsets,
    ellipse_offsets,
    ring_faces,
    ring_stations,
    rotation_minimizing_frames,
)
from gemmesh.synth.spec import ArterySpec, BifurcationAngles, BranchRadii, GeneratedArtery

PROPOSAL_KEYS = ("beta", "beta_prime", "gamma", "r_pmv", "r_dmv", "r_sb")
GAUSSIANS = {
    "beta": BETA,
    "beta_prime": BETA_PRIME,
    "gamma": GAMMA,
    "r_pmv": RADIUS_PMV,
    "r_dmv": RADIUS_DMV,
    "r_sb": RADIUS_SB,
}


def law_residual(r_pmv: float, r_dmv: float, r_sb: float) -> float:
    """Bifurcation-law residual d_PMV^a - (d_DMV^a + d_SB^a) with diameters in cm."""
    d = [2.0 * r / MM_PER_CM for r in (r_pmv, r_dmv, r_sb)]
    a = BIFURCATION_EXPONENT
    return d[0] ** a - (d[1] ** a + d[2] ** a)


def segment_angles(angle: float, n_segments: int) -> np.ndarray:
    """Linear angle schedule: zero on the first segment, `angle` on segment four."""
    k = np.arange(1, n_segments + 1)
    return angle * (k - 1) / (BIFURCATION_BRANCH_POINT - 1)


def tilt_angles(gamma: float, n_segments: int) -> np.ndarray:
    k = np.arange(1, n_segments + 1)
    return gamma * (k - 1) / 2.0


def rejection_reason(draw: dict) -> Optional[str]:
    """Why a proposal is rejected, or None when it is accepted."""
    beta, beta_prime, gamma = draw["beta"], draw["beta_prime"], draw["gamma"]
    r_pmv, r_dmv, r_sb = draw["r_pmv"], draw["r_dmv"], draw["r_sb"]
    n_segments = BIFURCATION_CONTROL_POINTS - 1
    if not (0.0 < beta < MAX_ANGLE and 0.0 < beta_prime < MAX_ANGLE and abs(gamma) < MAX_ANGLE):
        return "angle"
    if beta - beta_prime <= 0.0:
        return "angle"
    schedules = [
        segment_angles(beta - beta_prime, n_segments),
        segment_angles(-beta_prime, n_segments),
        tilt_angles(gamma, n_segments),
    ]
    if max(np.abs(a).max() for a in schedules) >= MAX_ANGLE:
        return "angle"
    if min(r_pmv, r_dmv, r_sb) < MIN_RADIUS:
        return "radius"
    if not r_pmv > r_dmv > r_sb or not 0.4 < r_sb / r_dmv < 1.0:
        return "radius"
    if abs(law_residual(r_pmv, r_dmv, r_sb)) > BIFURCATION_TOLERANCE:
        return "law"
    return None


def sample_bifurcation_parameters(rng: np.random.Generator) -> tuple:
    """Draw angle and radius proposals until one passes every constraint.

    Returns:
        tuple: (accepted draw dict, list of every proposal dict including the accepted one)

    Raises:
        RejectionBudgetExceededError: No proposal accepted within the draw budget.
    """
    proposals = []
    reasons = {}
    for _ in range(REJECTION_BUDGET):
        draw = {key: float(rng.normal(*GAUSSIANS[key])) for key in PROPOSAL_KEYS}
        proposals.append(draw)
        reason = rejection_reason(draw)
        if reason is None:
            logging.debug(
                f"Accepted bifurcation after {len(proposals)} draws, rejections {reasons}"
            )
            return draw, proposals
        reasons[reason] = reasons.get(reason, 0) + 1
    raise RejectionBudgetExceededError(
        f"no bifurcation accepted within {REJECTION_BUDGET} draws (rejections: {reasons})"
    )


def directions(in_plane: np.ndarray, tilt: np.ndarray) -> np.ndarray:
    a, c = np.radians(in_plane), np.radians(tilt)
    return np.column_stack([np.sin(c), np.cos(c) * np.sin(a), np.cos(c) * np.cos(a)])


def control_points(beta: float, beta_prime: float, gamma: float) -> tuple:
    """Main (p1..p7) and side branch (p4, s5..s7) control points in mm."""
    n_segments = BIFURCATION_CONTROL_POINTS - 1
    tilt = tilt_angles(gamma, n_segments)
    main_dirs = directions(segment_angles(beta - beta_prime, n_segments), tilt)
    side_dirs = directions(segment_angles(-beta_prime, n_segments), tilt)
    steps = BIFURCATION_CONTROL_SPACING * main_dirs
    main = np.concatenate([np.zeros((1, 3)), np.cumsum(steps, axis=0)])
    branch = BIFURCATION_BRANCH_POINT - 1
    side_steps = BIFURCATION_CONTROL_SPACING * side_dirs[branch:]
    side = main[branch] + np.concatenate([np.zeros((1, 3)), np.cumsum(side_steps, axis=0)])
    return main, side


def _taper(r0: float, length: float):
    def radius(s):
        return r0 * (1.0 - (1.0 - TAPER) * np.asarray(s) / length)

    return radius


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _noisy_offsets(frames, radii, segments, rng):
    """Elliptical ring offsets with semi-axes jittered by up to the ellipse noise."""
    low, high = radii * (1.0 - ELLIPSE_NOISE), radii * (1.0 + ELLIPSE_NOISE)
    axes = np.column_stack([rng.uniform(low, high), rng.uniform(low, high)])
    orientation = rng.uniform(0.0, np.pi, len(radii))
    return ellipse_offsets(frames, axes, orientation, segments)


def build_bifurcating(spec: ArterySpec) -> tuple:
    """Loft a bifurcating spec into one watertight-walled, open-ended mesh.

    The last PMV ring is split at two opposite vertices into halves, and a straight
    crotch line between those vertices closes each half into the first ring of one
    child branch. Child rings then morph from that half-disc towards their own
    (noisy, tapered) ellipses as the two branch centerlines separate.

    Returns:
        tuple: (Mesh, RingTable)
    """
    n = spec.segments
    m = n // 2
    spacing = spec.spacing or TWO_PI / n
    rng = np.random.default_rng(spec.noise_seed)
    main = np.asarray(spec.control_points)
    branch = BIFURCATION_BRANCH_POINT - 1
    pmv = Centerline(main[: branch + 1])
    children = {DMV: Centerline(main[branch:]), SB: Centerline(np.asarray(spec.side_points))}
    r0 = {MAIN: spec.radii.pmv, DMV: spec.radii.dmv, SB: spec.radii.sb}
    lines = {MAIN: pmv, **children}
    taper = {b: _taper(r0[b], lines[b].length) for b in lines}

    vertices, ring_ids, vertex_ring = [], [], []
    table = {k: [] for k in ("branch", "s", "center", "tangent", "radius")}
    count = 0

    def add_ring(branch_id, s, center, tangent, radius, positions=None, ids=None):
        nonlocal count
        ring = len(ring_ids)
        if ids is None:
            ids = count + np.arange(len(positions))
            vertices.append(positions)
            vertex_ring.extend([ring] * len(positions))
            count += len(positions)
        ring_ids.append(ids)
        for key, value in zip(table, (branch_id, s, center, tangent, radius)):
            table[key].append(value)
        return ids

    # parent vessel, ending in a circular junction ring
    stations = ring_stations(0.0, pmv.length, lambda s: spacing * float(taper[MAIN](s)))
    centers, tangents = pmv.point(stations), pmv.tangent(stations)
    t_end = tangents[-1]
    split = children[DMV].tangent(0.0)[0] - children[SB].tangent(0.0)[0]
    split = split - np.dot(split, t_end) * t_end
    axis = _unit(np.cross(t_end, split))
    frames = align_frames(rotation_minimizing_frames(centers, tangents, axis), -1, axis)
    radii = taper[MAIN](stations)
    offsets = _noisy_offsets(frames, radii, n, rng)
    offsets[-1] = circle_offsets(frames[-1:], radii[-1:], n)[0]
    pmv_rings = []
    for i, s in enumerate(stations):
        ids = add_ring(MAIN, s, centers[i], tangents[i], radii[i], centers[i] + offsets[i])
        pmv_rings.append(ids)

    junction = pmv_rings[-1]
    joint = centers[-1]
    p0, pm = vertices[-1][0], vertices[-1][m]
    crotch = p0 + (np.arange(1, m) / m)[:, None] * (pm - p0)[None]
    crotch_ids = count + np.arange(m - 1)
    vertices.append(crotch)
    count += m - 1
    starts = {
        SB: np.concatenate([junction[: m + 1], crotch_ids[::-1]]),
        DMV: np.concatenate([junction[m:], junction[:1], crotch_ids]),
    }
    all_positions = np.concatenate(vertices)

    child_rings = {}
    outlets = []
    for branch_id, other_id in ((DMV, SB), (SB, DMV)):
        line, other = children[branch_id], children[other_id]
        stations = ring_stations(0.0, line.length, lambda s: spacing * float(taper[branch_id](s)))
        centers, tangents = line.point(stations), line.tangent(stations)
        start = all_positions[starts[branch_id]]
        reference = start[0] - joint
        frames = align_frames(
            rotation_minimizing_frames(centers, tangents, reference), 0, reference
        )
        radii = taper[branch_id](stations)
        target = _noisy_offsets(frames, radii, n, rng)
        separation = np.linalg.norm(centers - other.point(stations), axis=1)
        blend = np.clip(separation / (radii + taper[other_id](stations)), 0.0, 1.0) ** 2
        start_offsets = start - joint

        ids = add_ring(branch_id, 0.0, joint, tangents[0], radii[0], ids=starts[branch_id])
        rings = [ids]
        for k in range(1, len(stations)):
            rotation = frames[k].T @ frames[0]
            carried = start_offsets @ rotation.T
            positions = centers[k] + (1.0 - blend[k]) * carried + blend[k] * target[k]
            ids = add_ring(branch_id, stations[k], centers[k], tangents[k], radii[k], positions)
            rings.append(ids)
        child_rings[branch_id] = rings
        outlets.append(rings[-1])

    faces = np.concatenate(
        [ring_faces(pmv_rings), ring_faces(child_rings[DMV]), ring_faces(child_rings[SB])]
    )
    # crotch vertices belong to the first DMV ring for labelling
    crotch_ring = len(pmv_rings)
    head = len(pmv_rings) * n
    vertex_ring = np.asarray(vertex_ring[:head] + [crotch_ring] * (m - 1) + vertex_ring[head:])
    markers = {INLET: pmv_rings[0], OUTLET: np.sort(np.concatenate(outlets))}
    mesh = build_mesh(np.concatenate(vertices), faces, markers)
    rings = RingTable(
        branch=np.asarray(table["branch"]),
        s=np.asarray(table["s"], dtype=np.float64),
        center=np.asarray(table["center"]),
        tangent=np.asarray(table["tangent"]),
        radius=np.asarray(table["radius"], dtype=np.float64),
        vertex_ring=vertex_ring,
    )
    return mesh, rings


def synth_bifurcating(
    seed: int,
    segments: int = 32,
    spacing: Optional[float] = None,
    flow: Optional[float] = None,
    flow_range: tuple = TRAIN_FLOW_RANGE,
    time_steps: int = 1,
) -> GeneratedArtery:
    """Rejection-sample bifurcation parameters for `seed` and loft the mesh.

    Raises:
        RejectionBudgetExceededError: No admissible parameters within the draw budget.

    Returns:
        GeneratedArtery: spec, mesh, ring table and every proposal drawn.
    """
    rng = np.random.default_rng(seed)
    draw, proposals = sample_bifurcation_parameters(rng)
    main, side = control_points(draw["beta"], draw["beta_prime"], draw["gamma"])
    noise_seed = int(rng.integers(2**31))
    if flow is None:
        flow = float(rng.uniform(*flow_range))
    spec = ArterySpec(
        kind="bifurcating",
        seed=seed,
        segments=segments,
        spacing=spacing,
        control_points=main.tolist(),
        side_points=side.tolist(),
        radii=BranchRadii(pmv=draw["r_pmv"], dmv=draw["r_dmv"], sb=draw["r_sb"]),
        angles=BifurcationAngles(
            beta=draw["beta"], beta_prime=draw["beta_prime"], gamma=draw["gamma"]
        ),
        law_residual=law_residual(draw["r_pmv"], draw["r_dmv"], draw["r_sb"]),
        noise_seed=noise_seed,
        flow=flow,
        time_steps=time_steps,
    )
    mesh, rings = build_bifurcating(spec)
    logging.debug(
        f"Bifurcating artery seed={seed}: beta={draw['beta']:.1f}, "
        f"residual={spec.law_residual:.4f}, {mesh.n_vertices} vertices"
    )
    return GeneratedArtery(spec, mesh, rings, proposals)
