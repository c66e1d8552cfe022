import math

import numpy as np
import pytest

from hosynth import symmetry as sy
from hosynth.errors import AlignmentError, FormatError, InvalidArgument
from hosynth.mesh import ObjectModel, box, cylinder
from hosynth.rigid import RigidTransform, axis_angle, random_rotation, rotation_angle


def _spec(text):
    return sy.parse_symmetry_row("obj " + text)[1]


def test_parse_rows():
    oid, spec = sy.parse_symmetry_row("006_mustard_bottle | z | 180")
    assert oid == "006_mustard_bottle"
    assert spec.entries == (sy.SymmetryEntry("z", math.pi),)
    _, spec = sy.parse_symmetry_row("bowl x,y,z 180,180,inf")
    assert [e.axis for e in spec.entries] == ["x", "y", "z"]
    assert spec.entries[2].angle == sy.REVOLUTION
    for bad in ("a b", "a x,y 180", "a w 180", "a x 70", "a x abc"):
        with pytest.raises((FormatError, InvalidArgument)):
            sy.parse_symmetry_row(bad)


def test_table_round_trip(tmp_path):
    path = tmp_path / "sym.txt"
    spec = _spec("x,z 90,inf")
    path.write_text("# id axes angles\n" + sy.format_symmetry_row("cup", spec) + "\n\n")
    table = sy.load_symmetry_table(path)
    assert table == {"cup": spec}


def test_align_axis_aligned_box():
    obj = box((0.06, 0.04, 0.03), 3)
    T = sy.principal_axis_align(obj)
    R = T.rotation
    assert np.allclose(np.abs(R), np.round(np.abs(R)), atol=1e-12)
    ext = np.ptp(T.apply(obj.vertices), axis=0)
    np.testing.assert_allclose(ext, [0.03, 0.04, 0.06], atol=1e-12)
    assert abs(np.linalg.det(R) - 1.0) < 1e-12


def test_align_recovers_known_rotation(rng):
    obj = box((0.03, 0.04, 0.06), 3)
    base = sy.principal_axis_align(obj)
    np.testing.assert_allclose(base.rotation, np.eye(3), atol=1e-12)
    for _ in range(5):
        T = RigidTransform.from_matrix(random_rotation(rng), rng.normal(0, 0.1, 3))
        V = T.apply(obj.vertices)
        A = sy.principal_axis_align(V)
        assert sy.hausdorff(A.apply(V), base.apply(obj.vertices)) < 1e-9


def test_align_translation_is_minus_centroid():
    obj = box((0.03, 0.04, 0.06), 2)
    c = np.array([0.2, -0.1, 0.05])
    T = sy.principal_axis_align(obj.vertices + c)
    np.testing.assert_allclose(T.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(T.translation, -c, atol=1e-15)


def test_align_degenerate():
    flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.0], [0.5, 0.2, 0]])
    with pytest.raises(AlignmentError):
        sy.principal_axis_align(flat)


def _symmetric_cloud(rng, n=300):
    half = rng.normal(size=(n, 3)) * [0.05, 0.03, 0.02] + [0.02, 0.0, 0.0]
    return np.vstack([half, half @ axis_angle([0, 0, 1], math.pi).T])


def test_icp_exact_symmetry(rng):
    V = _symmetric_cloud(rng)
    V -= V.mean(axis=0)
    dR, c0, c1 = sy.icp_refine(V, axis_angle([0, 0, 1], math.pi))
    assert rotation_angle(dR) < 1e-4
    assert c1 <= c0 < 1e-20


def test_icp_recovers_small_offset(rng):
    V = _symmetric_cloud(rng)
    V -= V.mean(axis=0)
    dR, c0, c1 = sy.icp_refine(V, axis_angle([0, 0, 1], math.pi - 0.01))
    assert abs(rotation_angle(dR) - 0.01) < 1e-3
    np.testing.assert_allclose(dR, axis_angle([0, 0, 1], 0.01), atol=1e-3)
    assert c1 < c0


def test_icp_monotone_on_asymmetric_cloud(rng):
    V = rng.normal(size=(200, 3)) * [0.05, 0.03, 0.02]
    V -= V.mean(axis=0)
    for _ in range(5):
        _, c0, c1 = sy.icp_refine(V, random_rotation(rng))
        assert c1 <= c0


def test_close_group():
    klein = sy.close_group(sy.generators(_spec("x,y,z 180,180,180")))
    assert len(klein) == 4 and np.array_equal(klein[0], np.eye(3))
    assert len(sy.close_group(sy.generators(_spec("z inf"), 36))) == 36
    assert len(sy.close_group(sy.generators(_spec("x,z 180,inf"), 36))) == 72


def _check_set(obj, sset, tol=1e-3):
    assert np.array_equal(sset.rotations[0], np.eye(3))
    for R in sset.rotations:
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(R) - 1) < 1e-9
    res, ok = sy.check_symmetry_set(obj, sset, tol)
    assert ok and res.max() <= tol * obj.diameter


def test_box_klein_four():
    obj = box((0.06, 0.04, 0.03), 4)
    sset = sy.symmetry_set(obj, _spec("x,y,z 180,180,180"))
    assert len(sset) == 4
    _check_set(obj, sset)


def test_single_axis_half_turn():
    obj = box((0.06, 0.04, 0.03), 4)
    sset = sy.symmetry_set(obj, _spec("z 180"))
    assert len(sset) == 2
    _check_set(obj, sset)


def test_cylinder_revolution():
    obj = cylinder(0.025, 0.12)
    sset = sy.symmetry_set(obj, _spec("z inf"), revolution_steps=36)
    assert len(sset) == 36 and not sset.dropped
    _check_set(obj, sset)
    # closed under composition up to the set tolerance
    R = sset.rotations
    for A in R[::7]:
        for B in R[::5]:
            assert np.min(np.abs(R - A @ B).max(axis=(1, 2))) < 1e-6


def test_false_symmetries_dropped():
    obj = box((0.06, 0.04, 0.03), 4)
    sset = sy.symmetry_set(obj, _spec("z 90"))
    assert len(sset) == 2 and len(sset.dropped) == 2
    _check_set(obj, sset)


def test_rotated_object_set_is_in_object_frame(rng):
    base = box((0.06, 0.04, 0.03), 3)
    T = RigidTransform.from_matrix(random_rotation(rng), [0.1, 0.2, 0.3])
    obj = ObjectModel("rot", T.apply(base.vertices), base.triangles)
    sset = sy.symmetry_set(obj, _spec("x,y,z 180,180,180"))
    assert len(sset) == 4
    _check_set(obj, sset)


def test_set_round_trip(tmp_path):
    obj = cylinder(0.02, 0.08, segments=24)
    sset = sy.symmetry_set(obj, _spec("z inf"), revolution_steps=12)
    path = tmp_path / "s.json"
    sy.save_symmetry_set(path, sset)
    assert sy.load_symmetry_set(path) == sset
    path.write_text('{"rotations": 3}')
    with pytest.raises(FormatError):
        sy.load_symmetry_set(path)
