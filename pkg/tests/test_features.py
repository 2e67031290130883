import numpy as np
import pytest
import torch
from scipy.spatial.transform import Rotation

from gemmesh.errors import SignatureMismatchError
from gemmesh.geometry.gauge import build_gauges, random_gauge_angles, rotate_gauges
from gemmesh.geometry.mesh import radius_graph, vertex_normals
from gemmesh.geometry.primitives import cylinder, grid_patch
from gemmesh.nn.features import (
    ambient_values,
    ambient_width,
    irrep_signature,
    irrep_values,
    local_shape_features,
    output_head,
    output_signature,
    rescale_flow,
    to_irrep_field,
)
from gemmesh.nn.irreps import IrrepField

ROTATION = Rotation.from_euler("xyz", [0.5, -0.8, 1.9]).as_matrix()


@pytest.fixture
def tube():
    return cylinder(radius=1.5, length=12.0, segments=12, rings=9)


@pytest.fixture
def pack(tube):
    graph = radius_graph(tube, 2.0)
    return local_shape_features(tube, graph, vertex_normals(tube), boundary_condition=3.0)


def test_flat_patch_features():
    mesh = grid_patch(5, 5)
    graph = radius_graph(mesh, 1.5)
    pack = local_shape_features(mesh, graph, vertex_normals(mesh), geodesic_distance=np.zeros(25))
    assert np.allclose(pack.m2, np.diag([0.0, 0.0, 1.0]))
    # Expected: chords lie in the plane, so only the third column of m3 is non-zero
    assert np.allclose(pack.m3[:, :, :2], 0.0)
    assert np.allclose(pack.m3[12, :, 2], 0.0)
    assert np.allclose(pack.m1[:, 2, :], 0.0)
    assert pack.boundary_condition is None


def test_features_conjugate_under_rotation(tube, pack):
    moved = tube.transformed(ROTATION, [2.0, 0.0, -1.0])
    graph = radius_graph(moved, 2.0)
    other = local_shape_features(
        moved, graph, vertex_normals(moved), boundary_condition=3.0
    )
    expected = pack.rotated(ROTATION)
    for name in ("m1", "m2", "m3"):
        assert np.allclose(getattr(other, name), getattr(expected, name), atol=1e-10)
    assert np.allclose(other.geodesic_distance, pack.geodesic_distance)


def test_irrep_values_invariant_under_rigid_motion(tube, pack):
    frames = build_gauges(tube)
    a = irrep_values(pack, frames)
    b = irrep_values(pack.rotated(ROTATION), frames @ ROTATION.T)
    assert np.allclose(a, b, atol=1e-10)


def test_irrep_field_transforms_with_gauge(tube, pack):
    frames = build_gauges(tube)
    angles = random_gauge_angles(tube.n_vertices, 7)
    field = to_irrep_field(pack, frames)
    rotated = to_irrep_field(pack, rotate_gauges(frames, angles))
    assert torch.allclose(
        rotated.values, field.gauge_transformed(angles).values, atol=1e-10
    )


def test_irrep_field_layout(tube, pack):
    field = to_irrep_field(pack, build_gauges(tube))
    assert field.signature == irrep_signature(True)
    assert field.signature.dim == 23
    assert ambient_width(True) == 23
    assert ambient_values(pack).shape == (tube.n_vertices, 23)
    # Expected: last two scalars are distance / 10 mm and the rescaled flow
    assert np.allclose(field.values[:, 7].numpy(), pack.geodesic_distance / 10.0)
    assert np.allclose(field.values[:, 8].numpy(), rescale_flow(3.0))


def test_rescale_flow_bounds():
    assert rescale_flow(1.87) == pytest.approx(0.0)
    assert rescale_flow(4.36) == pytest.approx(1.0)


def test_output_head_identity_frames():
    time_steps = 2
    values = torch.tensor([[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]], dtype=torch.float64)
    field = IrrepField(output_signature(time_steps), values)
    out = output_head(field, np.eye(3)[None], time_steps)
    # Expected: (f1x, f1y, f0) per time step
    assert out.tolist() == [[[3.0, 4.0, 1.0], [5.0, 6.0, 2.0]]]


def test_output_head_ignores_gauge_choice(tube):
    time_steps = 3
    signature = output_signature(time_steps)
    frames = build_gauges(tube)
    angles = random_gauge_angles(tube.n_vertices, 1)
    generator = torch.Generator().manual_seed(0)
    values = torch.randn(tube.n_vertices, signature.dim, generator=generator, dtype=torch.float64)
    field = IrrepField(signature, values)
    a = output_head(field, frames, time_steps)
    b = output_head(field.gauge_transformed(angles), rotate_gauges(frames, angles), time_steps)
    assert torch.allclose(a, b, atol=1e-12)


def test_output_head_scalars_and_mismatch():
    field = IrrepField(output_signature(2, vector=False), torch.ones(4, 2, dtype=torch.float64))
    assert output_head(field, np.tile(np.eye(3), (4, 1, 1)), 2).shape == (4, 2, 1)
    with pytest.raises(SignatureMismatchError):
        output_head(field, np.tile(np.eye(3), (4, 1, 1)), 3)
