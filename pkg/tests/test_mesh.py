import numpy as np
import pytest
from scipy.stats import chisquare

from hosynth.errors import MeshError
from hosynth.mesh import ObjectModel, box, cylinder, icosphere, load_obj, save_obj

from oracles import signed_distance


@pytest.mark.parametrize("make", [lambda: icosphere(0.04, 2), lambda: box((0.06, 0.04, 0.03)),
                                  lambda: cylinder(0.025, 0.12, segments=24)])
def test_primitives_closed_and_outward(make):
    obj = make()
    assert obj.check_closed()
    # divergence theorem: positive enclosed volume means outward normals
    vol = np.einsum("ij,ij->i", obj.v0, np.cross(obj.v1, obj.v2)).sum() / 6.0
    assert vol > 0


def test_box_volume_and_corners():
    obj = box((0.06, 0.04, 0.03), 4)
    vol = np.einsum("ij,ij->i", obj.v0, np.cross(obj.v1, obj.v2)).sum() / 6.0
    assert vol == pytest.approx(0.06 * 0.04 * 0.03, rel=1e-12)
    c = obj.corners
    assert c.shape == (8, 3)
    np.testing.assert_allclose(np.abs(c), np.tile([0.03, 0.02, 0.015], (8, 1)), atol=1e-15)
    assert len({tuple(x) for x in c}) == 8


def test_signed_distance_matches_oracle(rng):
    obj = icosphere(0.04, 2)
    p = rng.uniform(-0.07, 0.07, size=(200, 3))
    sdf, _ = obj.signed_distance(p)
    np.testing.assert_allclose(sdf, signed_distance(p, obj.vertices, obj.triangles), atol=1e-9)


def test_obj_round_trip(tmp_path):
    obj = cylinder(0.02, 0.1, segments=16, object_id="c")
    path = tmp_path / "c.obj"
    save_obj(obj, path)
    back = load_obj(path)
    assert back.id == "c"
    assert np.array_equal(back.vertices, obj.vertices)
    assert np.array_equal(back.triangles, obj.triangles)


def test_obj_polygons_are_fan_triangulated(tmp_path):
    path = tmp_path / "cube.obj"
    v = [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
    quads = [(1, 2, 4, 3), (5, 7, 8, 6), (1, 5, 6, 2), (3, 4, 8, 7), (1, 3, 7, 5), (2, 6, 8, 4)]
    path.write_text("".join(f"v {a} {b} {c}\n" for a, b, c in v)
                    + "".join("f " + " ".join(map(str, q)) + "\n" for q in quads))
    obj = load_obj(path)
    assert len(obj.triangles) == 12 and obj.check_closed()


def test_malformed_obj(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 x\n")
    with pytest.raises(MeshError):
        load_obj(path)
    with pytest.raises(MeshError):
        load_obj(tmp_path / "missing.obj")


def test_degenerate_mesh_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0.0]])
    with pytest.raises(MeshError):
        ObjectModel("flat", v, np.array([[0, 1, 2], [0, 1, 3], [1, 2, 3], [0, 2, 3]]))


def test_surface_samples_uniform_per_face(rng):
    obj = box((1.0, 1.0, 1.0), 3)
    pts, _ = obj.sample_surface(60000, rng)
    face = np.argmax(np.abs(pts), axis=1) * 2 + (pts[np.arange(len(pts)), np.argmax(np.abs(pts), axis=1)] > 0)
    counts = np.bincount(face, minlength=6)
    assert chisquare(counts).pvalue > 0.01


def test_sphere_centroid_and_diameter():
    obj = icosphere(0.04, 3, center=(0.1, 0.0, -0.2))
    np.testing.assert_allclose(obj.centroid, [0.1, 0.0, -0.2], atol=1e-12)
    assert obj.diameter == pytest.approx(0.08, rel=1e-9)
