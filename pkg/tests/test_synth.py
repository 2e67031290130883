import numpy as np
import pytest

from gemmesh.constants import DMV, MAIN, SB
from gemmesh.errors import RejectionBudgetExceededError
from gemmesh.geometry.io import write_obj
from gemmesh.geometry.mesh import build_mesh, geodesic_inlet_distance, radius_graph
from gemmesh.synth.bifurcating import (
    GAUSSIANS,
    PROPOSAL_KEYS,
    build_bifurcating,
    control_points,
    law_residual,
    rejection_reason,
    sample_bifurcation_parameters,
    synth_bifurcating,
)
from gemmesh.synth.single import build_single, stenosis_profile, synth_single
from gemmesh.synth.spec import ArterySpec

FAST = {"segments": 12, "spacing": 1.0}


def accepted_draw(**overrides):
    draw = {"beta": 80.0, "beta_prime": 40.0, "gamma": 10.0, "r_pmv": 1.75, "r_dmv": 1.4}
    draw["r_sb"] = 1.1
    draw.update(overrides)
    return draw


def edge_counts(mesh):
    edges = np.sort(mesh.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return counts


@pytest.fixture(scope="module")
def single():
    return synth_single(seed=11, **FAST)


@pytest.fixture(scope="module")
def bifurcating():
    return synth_bifurcating(seed=2, **FAST)


def test_single_is_reproducible(tmp_path, single):
    again = synth_single(seed=11, **FAST)
    write_obj(single.mesh, tmp_path / "a.obj")
    write_obj(again.mesh, tmp_path / "b.obj")
    assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()
    assert again.spec == single.spec
    assert build_single(single.spec)[0].vertices.tolist() == single.mesh.vertices.tolist()


def test_single_parameters(single):
    spec = single.spec
    assert spec.kind == "single"
    assert 1.25 <= spec.radius <= 2.0
    assert 1.87 <= spec.flow <= 4.36
    assert len(spec.stenoses) <= 2
    assert len(spec.control_points) == 11
    assert np.allclose(np.diff(np.asarray(spec.control_points)[:, 0]), 4.0)
    assert np.all(np.abs(np.diff(np.asarray(spec.control_points)[:, 1])) <= 1.5)


def test_single_flow_choice():
    assert synth_single(seed=11, flow=2.5, **FAST).spec.flow == 2.5
    flows = [
        synth_single(seed=s, flow_range=(0.63, 0.7), **FAST).spec.flow for s in range(3)
    ]
    assert all(0.63 <= f <= 0.7 for f in flows)


def test_single_mesh_is_an_open_tube(single):
    mesh = single.mesh
    counts = edge_counts(mesh)
    assert counts.max() == 2
    # Expected: only the inlet and outlet rings are boundary edges
    assert (counts == 1).sum() == 2 * single.spec.segments
    assert len(mesh.inlet) == len(mesh.outlet) == single.spec.segments
    assert np.array_equal(single.rings.branch, np.full(len(single.rings.s), MAIN))
    assert len(single.rings.vertex_ring) == mesh.n_vertices


def test_single_inlet_distance(single):
    distance = geodesic_inlet_distance(single.mesh, radius_graph(single.mesh, 3.0))
    assert np.all(distance[single.mesh.inlet] == 0.0)
    assert distance[single.mesh.outlet].min() > 40.0


def test_stenosis_profile_is_capped():
    spec = ArterySpec(
        kind="single",
        seed=0,
        control_points=[[0.0, 0.0, 0.0], [4.0, 0.0, 0.0]],
        radius=1.5,
        stenoses=[
            {"position": 10.0, "severity": 0.4, "length": 4.0},
            {"position": 10.5, "severity": 0.4, "asymmetry": 0.0, "length": 4.0},
        ],
        flow=3.0,
    )
    narrowing, offset = stenosis_profile(spec, np.array([0.0, 10.0, 10.25, 10.5, 20.0]))
    assert narrowing[0] == 0.0 and narrowing[-1] == 0.0
    assert narrowing.max() == pytest.approx(0.5)
    assert np.all(offset[1:4] > 0)


def test_spec_validation():
    base = {"kind": "single", "seed": 0, "control_points": [[0.0, 0.0, 0.0]], "flow": 3.0}
    with pytest.raises(ValueError, match="radius"):
        ArterySpec(**base, radius=3.0)
    with pytest.raises(ValueError, match="even"):
        ArterySpec(**base, radius=1.5, segments=13)
    with pytest.raises(ValueError, match="bifurcating arteries need"):
        ArterySpec(**{**base, "kind": "bifurcating"})


def test_law_residual():
    # Expected: 0.35^2.4 - (0.3^2.4 + 0.2^2.4) with diameters in cm
    assert law_residual(1.75, 1.5, 1.0) == pytest.approx(0.35**2.4 - 0.3**2.4 - 0.2**2.4)


def test_rejection_reasons():
    assert rejection_reason(accepted_draw()) is None
    assert rejection_reason(accepted_draw(beta=95.0)) == "angle"
    assert rejection_reason(accepted_draw(beta_prime=85.0)) == "angle"
    assert rejection_reason(accepted_draw(gamma=-70.0)) == "angle"
    assert rejection_reason(accepted_draw(r_sb=0.4)) == "radius"
    assert rejection_reason(accepted_draw(r_dmv=1.8)) == "radius"
    assert rejection_reason(accepted_draw(r_pmv=3.0, r_dmv=1.2, r_sb=1.0)) == "law"


def test_rejection_budget(monkeypatch):
    monkeypatch.setattr("gemmesh.synth.bifurcating.REJECTION_BUDGET", 1)
    monkeypatch.setattr("gemmesh.synth.bifurcating.rejection_reason", lambda draw: "angle")
    with pytest.raises(RejectionBudgetExceededError, match="angle"):
        sample_bifurcation_parameters(np.random.default_rng(0))


def test_control_points_branch_at_p4():
    main, side = control_points(80.0, 40.0, 0.0)
    assert main.shape == (7, 3)
    assert side.shape == (4, 3)
    assert np.array_equal(side[0], main[3])
    assert np.allclose(np.linalg.norm(np.diff(main, axis=0), axis=1), 4.0)
    # Expected: with gamma = 0 both branches stay in the x = 0 plane
    assert np.allclose(main[:, 0], 0.0) and np.allclose(side[:, 0], 0.0)


def test_bifurcating_parameters(bifurcating):
    spec = bifurcating.spec
    assert abs(spec.law_residual) <= 0.165
    assert spec.radii.pmv > spec.radii.dmv > spec.radii.sb >= 0.5
    assert 0 < spec.angles.beta_prime < spec.angles.beta < 90
    assert rejection_reason(bifurcating.proposals[-1]) is None
    assert all(rejection_reason(p) is not None for p in bifurcating.proposals[:-1])


def test_bifurcating_is_reproducible(bifurcating):
    again = synth_bifurcating(seed=2, **FAST)
    assert again.spec == bifurcating.spec
    assert np.array_equal(again.mesh.vertices, bifurcating.mesh.vertices)
    assert np.array_equal(build_bifurcating(again.spec)[0].faces, bifurcating.mesh.faces)


def test_bifurcating_mesh_is_manifold(bifurcating):
    mesh = bifurcating.mesh
    counts = edge_counts(mesh)
    assert counts.max() == 2
    # Expected: one inlet ring and two outlet rings are open
    assert (counts == 1).sum() == 3 * bifurcating.spec.segments
    assert len(mesh.inlet) == bifurcating.spec.segments
    assert len(mesh.outlet) == 2 * bifurcating.spec.segments
    assert set(np.unique(bifurcating.rings.branch)) == {MAIN, DMV, SB}


def straight_spec(**overrides):
    points = [[4.0 * i, 0.0, 0.0] for i in range(11)]
    fields = {"kind": "single", "seed": 0, "control_points": points, "radius": 1.5, "flow": 3.0}
    fields.update(overrides)
    return ArterySpec(**fields)


def ring_diameter(mesh, rings, ring):
    points = mesh.vertices[rings.vertex_ring == ring]
    return np.linalg.norm(points[:, None] - points[None], axis=-1).max()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_single_default_resolution_size(seed):
    artery = synth_single(seed=seed)
    assert artery.spec.segments == 32
    assert 4000 <= artery.mesh.n_vertices <= 16000


def test_straight_tube_has_constant_radius():
    mesh, _ = build_single(straight_spec())
    distance = np.hypot(mesh.vertices[:, 1], mesh.vertices[:, 2])
    assert np.all(np.abs(distance - 1.5) <= 1.5e-3)


def test_stenosis_halves_the_diameter():
    stenosis = {"position": 20.0, "severity": 0.5, "asymmetry": 0.2, "length": 4.5}
    mesh, rings = build_single(straight_spec(stenoses=[stenosis]))
    throat = int(np.flatnonzero(np.isclose(rings.s, 20.0))[0])
    assert int(np.argmin(rings.radius)) == throat
    # Expected: half the 3 mm base diameter, within 2%
    assert ring_diameter(mesh, rings, throat) == pytest.approx(1.5, rel=0.02)
    assert ring_diameter(mesh, rings, 0) == pytest.approx(3.0, rel=0.02)


@pytest.mark.slow
def test_bifurcating_population(tmp_path):
    artery_count = 500
    proposals = {key: [] for key in PROPOSAL_KEYS}
    for seed in range(artery_count):
        artery = synth_bifurcating(seed=seed, **FAST)
        assert abs(artery.spec.law_residual) <= 0.165
        mesh = artery.mesh
        assert edge_counts(build_mesh(mesh.vertices, mesh.faces, mesh.markers)).max() == 2
        for draw in artery.proposals:
            for key in PROPOSAL_KEYS:
                proposals[key].append(draw[key])

    # Expected: every proposal is a plain Gaussian draw, so the pooled means sit within 3 SE
    for key, (mean, sigma) in GAUSSIANS.items():
        values = np.asarray(proposals[key])
        assert abs(values.mean() - mean) <= 3.0 * sigma / np.sqrt(len(values)), key

    write_obj(synth_bifurcating(seed=7, **FAST).mesh, tmp_path / "a.obj")
    write_obj(synth_bifurcating(seed=7, **FAST).mesh, tmp_path / "b.obj")
    assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()
