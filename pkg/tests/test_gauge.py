import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from gemmesh.constants import TWO_PI
from gemmesh.errors import DegenerateTangentError, ZeroProjectionError
from gemmesh.geometry.gauge import (
    GaugeAtlas,
    build_gauges,
    chord_transport,
    frames_from_tangents,
    log_angles,
    log_map,
    random_gauge_angles,
    rotate_gauges,
    transport_angle,
    wrap_angle,
)
from gemmesh.geometry.mesh import radius_graph, vertex_normals
from gemmesh.geometry.primitives import cylinder, grid_patch, icosphere


def circular_distance(a, b):
    d = np.mod(np.asarray(a) - np.asarray(b), TWO_PI)
    return np.minimum(d, TWO_PI - d)


@pytest.fixture
def sphere():
    return icosphere(2)


@pytest.fixture
def sphere_atlas(sphere):
    graph = radius_graph(sphere, 0.35)
    return GaugeAtlas.from_frames(sphere.vertices, build_gauges(sphere), graph)


def test_frames_are_right_handed(sphere):
    frames = build_gauges(sphere)
    gram = np.einsum("vij,vkj->vik", frames, frames)
    assert np.allclose(gram, np.eye(3))
    assert np.allclose(np.cross(frames[:, 0], frames[:, 1]), frames[:, 2])
    assert np.allclose(frames[:, 2], vertex_normals(sphere))


def test_seeded_gauges_only_rotate_tangents(sphere):
    base = build_gauges(sphere)
    seeded = build_gauges(sphere, seed=3)
    assert np.allclose(seeded[:, 2], base[:, 2])
    assert not np.allclose(seeded[:, 0], base[:, 0])
    assert np.allclose(seeded, rotate_gauges(base, random_gauge_angles(sphere.n_vertices, 3)))


def test_frames_from_tangents_parallel():
    normals = np.array([[0.0, 0.0, 1.0]])
    with pytest.raises(DegenerateTangentError, match="vertex 0"):
        frames_from_tangents(normals, np.array([[0.0, 0.0, 2.0]]))


def test_log_angles_parallel_chord():
    positions = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    frames = np.stack([np.eye(3), np.eye(3)])
    with pytest.raises(ZeroProjectionError):
        log_angles(positions, frames, np.array([0]), np.array([1]))


def test_log_angles_self_pair_is_zero():
    positions = np.zeros((1, 3))
    assert log_angles(positions, np.eye(3)[None], np.array([0]), np.array([0]))[0] == 0.0


def test_log_map_on_flat_grid():
    mesh = grid_patch(3, 3)
    frames = frames_from_tangents(vertex_normals(mesh), np.tile([1.0, 0.0, 0.0], (9, 1)))
    atlas = GaugeAtlas.from_frames(mesh.vertices, frames, radius_graph(mesh, 1.5))
    assert log_map(atlas, 4, 5) == pytest.approx((0.0, 1.0))
    assert log_map(atlas, 4, 7) == pytest.approx((np.pi / 2, 1.0))
    assert log_map(atlas, 4, 0) == pytest.approx((5 * np.pi / 4, np.sqrt(2)))
    with pytest.raises(KeyError):
        log_map(atlas, 0, 8)


def test_parallel_gauges_have_trivial_transport():
    mesh = grid_patch(4, 4)
    frames = frames_from_tangents(vertex_normals(mesh), np.tile([1.0, 1.0, 0.0], (16, 1)))
    atlas = GaugeAtlas.from_frames(mesh.vertices, frames, radius_graph(mesh, 1.5))
    assert np.allclose(circular_distance(atlas.transport_angle, 0.0), 0.0, atol=1e-12)


def test_chord_transport_matches_atlas(sphere, sphere_atlas):
    graph = sphere_atlas.graph
    frames = sphere_atlas.frames
    pairs = chord_transport(sphere.vertices, frames, graph.centers, graph.indices)
    assert np.allclose(circular_distance(pairs, sphere_atlas.transport_angle), 0.0, atol=1e-12)
    # Expected: g = theta_pq + pi - theta_qp
    theta = sphere_atlas.log_angle
    assert np.allclose(
        circular_distance(pairs, theta + np.pi - theta[graph.reverse]), 0.0, atol=1e-12
    )
    same = chord_transport(sphere.vertices, frames, np.array([3]), np.array([3]))
    assert same[0] == 0.0


def test_transport_is_inverse_in_reverse(sphere_atlas):
    graph = sphere_atlas.graph
    total = sphere_atlas.transport_angle + sphere_atlas.transport_angle[graph.reverse]
    assert np.allclose(circular_distance(total, 0.0), 0.0, atol=1e-12)
    p, q = graph.centers[5], graph.indices[5]
    assert transport_angle(sphere_atlas, p, q) == sphere_atlas.transport_angle[5]


def test_gauge_rotation_shifts_angles(sphere, sphere_atlas):
    angles = random_gauge_angles(sphere.n_vertices, 11)
    graph = sphere_atlas.graph
    rotated = GaugeAtlas.from_frames(
        sphere.vertices, rotate_gauges(sphere_atlas.frames, angles), graph
    )
    expected_log = sphere_atlas.log_angle - angles[graph.centers]
    assert np.allclose(circular_distance(rotated.log_angle, expected_log), 0.0, atol=1e-10)
    expected_transport = (
        sphere_atlas.transport_angle - angles[graph.centers] + angles[graph.indices]
    )
    assert np.allclose(
        circular_distance(rotated.transport_angle, expected_transport), 0.0, atol=1e-10
    )


def test_angles_invariant_under_rigid_motion():
    mesh = cylinder(1.5, 10.0, 12, 8)
    rotation = Rotation.from_euler("xyz", [0.3, -1.1, 2.0]).as_matrix()
    frames = build_gauges(mesh)
    graph = radius_graph(mesh, 2.0)
    atlas = GaugeAtlas.from_frames(mesh.vertices, frames, graph)
    moved = GaugeAtlas.from_frames(
        mesh.vertices @ rotation.T + [4.0, -2.0, 7.0], frames @ rotation.T, graph
    )
    assert np.allclose(circular_distance(moved.log_angle, atlas.log_angle), 0.0, atol=1e-10)
    assert np.allclose(moved.log_radius, atlas.log_radius)
    assert np.allclose(
        circular_distance(moved.transport_angle, atlas.transport_angle), 0.0, atol=1e-10
    )


def test_wrap_angle_range():
    wrapped = wrap_angle(np.array([-np.pi, 0.0, TWO_PI, 7.0]))
    assert np.all((wrapped >= 0) & (wrapped < TWO_PI))
    assert wrapped[2] == 0.0
