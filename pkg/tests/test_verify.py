import numpy as np
import pytest

from gemmesh.config import ModelConfig
from gemmesh.geometry.mesh import radius_graph, vertex_normals
from gemmesh.geometry.primitives import cylinder
from gemmesh.nn.graph import level_arrays
from gemmesh.nn.model import build_model
from gemmesh.verify import (
    check_gauge,
    check_remesh,
    check_se3,
    check_translation,
    compare_receptive_fields,
    mask_span,
    relative_discrepancy,
    remesh,
    stacked_reach,
    vertex_discrepancies,
)


def small_config(**overrides):
    settings = {"widths": [2, 3, 4], "max_order": 1, "seed": 0}
    settings.update(overrides)
    return ModelConfig(**settings)


@pytest.fixture(scope="module")
def tube():
    return cylinder(radius=1.5, length=12.0, segments=12, rings=9)


@pytest.fixture(scope="module")
def gem_model():
    return build_model(small_config())


def test_relative_discrepancy():
    a = np.array([[3.0, 4.0], [0.0, 0.0]])
    assert relative_discrepancy(a, a) == 0.0
    assert relative_discrepancy(a, np.zeros_like(a)) == 1.0
    assert relative_discrepancy(np.zeros(2), np.ones(2)) == pytest.approx(np.sqrt(2) * 1e12)
    # Expected: vertex 1 differs by 5, vertex 0 by 0, largest vertex norm is 5
    assert vertex_discrepancies(a, np.array([[3.0, 4.0], [3.0, 4.0]])) == (1.0, 0.5)


def test_se3_check_passes_for_gem(tube, gem_model):
    report = check_se3(gem_model, tube, seed=2, flow=3.0)
    assert report.check == "se3"
    assert report.passed
    assert report.tolerance == 5e-3
    assert report.discrepancy < 1e-8
    assert {"lift", "head", "down.0", "up.0"} <= report.layers.keys()
    assert max(report.layers.values()) < 1e-8
    rotation = np.array(report.transform["rotation"])
    assert np.allclose(rotation @ rotation.T, np.eye(3))
    assert report.to_dict()["passed"] is True


def test_se3_check_does_not_depend_on_the_rotation_drawn(tube, gem_model):
    discrepancies = [
        check_se3(gem_model, tube, seed=seed, flow=3.0, translation=np.zeros(3)).discrepancy
        for seed in range(10)
    ]
    assert max(discrepancies) < 1e-8
    # Expected: only floating-point noise remains, at the same level for every rotation
    assert max(discrepancies) <= 2.0 * min(discrepancies)


def test_se3_check_fails_for_pointnet(tube):
    model = build_model(small_config(conv_kind="pointnet"))
    report = check_se3(model, tube, seed=2, flow=3.0)
    assert not report.passed
    assert check_translation(model, tube, seed=2, flow=3.0).passed


def test_translation_check(tube, gem_model):
    report = check_translation(gem_model, tube, seed=5, flow=3.0)
    assert report.check == "translation"
    assert report.tolerance == 1e-10
    assert report.transform["rotation"] == np.eye(3).tolist()
    assert report.passed


@pytest.mark.parametrize("nonlinearity,tolerance", [(False, 1e-9), (True, 5e-3)])
def test_gauge_check(tube, nonlinearity, tolerance):
    model = build_model(small_config(nonlinearity=nonlinearity))
    report = check_gauge(model, tube, seed=4, flow=3.0)
    assert report.tolerance == tolerance
    assert report.passed
    assert report.discrepancy < tolerance
    assert report.layers.keys() == {
        "lift",
        "encoder.0.0",
        "encoder.1.0",
        "encoder.2.0",
        "decoder.0.0",
        "decoder.1.0",
        "down.0",
        "down.1",
        "up.0",
        "up.1",
        "head",
    }
    if not nonlinearity:
        assert max(report.layers.values()) < 1e-9


def test_remesh_refine(tube):
    refined, kept = remesh(tube, "refine")
    assert refined.n_vertices > tube.n_vertices
    assert refined.n_faces == 4 * tube.n_faces
    assert np.array_equal(kept, np.arange(tube.n_vertices))
    assert np.array_equal(refined.vertices[: tube.n_vertices], tube.vertices)


def test_remesh_resample(tube):
    sampled, kept = remesh(tube, "resample", seed=3)
    # Expected: round(0.7 * 108) vertices, in original order, with the original normals
    assert sampled.n_vertices == 76
    assert sampled.n_faces == 0
    assert np.all(np.diff(kept) > 0)
    assert np.array_equal(sampled.vertices, tube.vertices[kept])
    assert np.allclose(sampled.normals, vertex_normals(tube)[kept])
    assert np.array_equal(kept, remesh(tube, "resample", seed=3)[1])
    assert not np.array_equal(kept, remesh(tube, "resample", seed=4)[1])
    assert set(sampled.inlet.tolist()) == {
        i for i, v in enumerate(kept) if v in set(tube.inlet.tolist())
    }


def test_remesh_keep_everything(tube):
    sampled, kept = remesh(tube, "resample", keep_fraction=1.0)
    assert np.array_equal(kept, np.arange(tube.n_vertices))
    assert np.array_equal(sampled.vertices, tube.vertices)


def test_remesh_unknown_mode(tube):
    with pytest.raises(ValueError, match="unknown remeshing mode"):
        remesh(tube, "decimate")


def test_remesh_check_reports_without_tolerance(tube, gem_model):
    report = check_remesh(gem_model, tube, "refine", flow=3.0)
    assert report.check == "remesh-refine"
    assert report.tolerance is None
    assert report.passed
    assert np.isfinite(report.discrepancy)
    assert report.transform["vertices"] > tube.n_vertices


def test_stacked_reach(tube):
    level = level_arrays(radius_graph(tube, 1.2), tube.vertices)
    assert stacked_reach(level, 0, 0).sum() == 1
    one, two = stacked_reach(level, 0, 1), stacked_reach(level, 0, 2)
    assert one.sum() > 1
    assert np.all(two | ~one)
    assert two.sum() > one.sum()


def test_mask_span():
    positions = np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])
    assert mask_span(positions, np.array([False, True, False, True, False])) == pytest.approx(2.0)


def test_hierarchy_widens_receptive_field_span():
    long_tube = cylinder(radius=1.5, length=40.0, segments=12, rings=27)
    result = compare_receptive_fields(small_config(), long_tube, seed_vertex=0)
    assert result["check"] == "rf"
    assert result["threshold"] == 4.0
    assert result["spans"]["model"]["span_mm"] > result["spans"]["one_level"]["span_mm"]
    single = compare_receptive_fields(small_config(levels=1), long_tube, seed_vertex=0)
    assert single["ratio"] == pytest.approx(1.0)
    assert single["passed"]
