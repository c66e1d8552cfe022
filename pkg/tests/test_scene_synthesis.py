import json
import math

import numpy as np
import pytest

from hosynth import grasp_forge as gf
from hosynth import hand_model as hm
from hosynth import scene_synthesis as ss
from hosynth.ccv_space import TripletIndex, build_space
from hosynth.errors import FormatError, InvalidArgument
from hosynth.mesh import icosphere

import oracles

N_POSES = 10


@pytest.fixture(scope="module")
def sphere_space(sphere4, skeleton):
    cfg = gf.GraspConfig(budget_factor=10)
    grasps = gf.generate_poses(sphere4, N_POSES, cfg, np.random.default_rng(21), skeleton)
    space = build_space(1, N_POSES, (4, 8), [grasps], [sphere4.id])
    return space, {0: sphere4}


def _zero_cfg():
    return ss.SynthConfig(sigma_bend=0.0, sigma_splay=0.0, delta_u=0.0, delta_phi=0.0,
                          shape_sigma=0.0)


def test_zero_disturbance(sphere_space):
    space, objects = sphere_space
    t = TripletIndex(0, 3, 5)
    d = ss.synthesize(t, space, objects, _zero_cfg(), seed=4)
    assert d.hand_pose == hm.expand_pose(space.grasp(t).pose)
    assert d.mitigation_steps == 0
    vp = space.viewpoint(t)
    assert d.viewpoint.u == vp.u and d.viewpoint.phi == vp.phi
    assert np.array_equal(d.viewpoint.direction, vp.direction)


def test_determinism_and_seed_reconstruction(sphere_space):
    space, objects = sphere_space
    t = TripletIndex(0, 7, 20)
    a = ss.synthesize(t, space, objects, seed=ss.item_seed(9, t))
    b = ss.synthesize(t, space, objects, seed=ss.item_seed(9, t))
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    c = ss.synthesize(a.triplet, space, objects, seed=a.seed)
    assert c == a
    assert ss.synthesize(t, space, objects, seed=a.seed + 1) != a
    assert hm.validate_pose(a.hand_pose).valid
    assert abs(np.linalg.norm(a.viewpoint.direction) - 1.0) < 1e-12
    assert 0 <= a.background_id < 1000 and 0 <= a.texture_id < 100
    with pytest.raises(InvalidArgument):
        ss.synthesize((1, 0, 0), space, objects)


def test_batch_penetration_rate(sphere_space, sphere4):
    space, objects = sphere_space
    rng = np.random.default_rng(8)
    triplets = [TripletIndex(0, int(rng.integers(N_POSES)), int(rng.integers(32)))
                for _ in range(1000)]
    out, failed = ss.synthesize_batch(triplets, space, objects, master_seed=2)
    assert len(out) + len(failed) == 1000
    # re-check a subset with the brute-force signed distance
    good = 0
    for d in out:
        good += d.max_penetration <= 0.002
    for d in out[::25]:
        skel = hm.build_skeleton(d.shape)
        anchors = hm.anchor_positions(skel, d.hand_pose).reshape(-1, 3)
        sdf = oracles.signed_distance(anchors, sphere4.vertices, sphere4.triangles)
        assert abs(max(0.0, -sdf.min()) - d.max_penetration) < 1e-7
    assert good >= 950


def _single_tip_case(skeleton, depth=0.001, R=0.005):
    a = np.zeros((5, 3, 3))
    a[:, :, hm.BEND] = [0.5, 0.6, 0.4]
    pose = hm.HandPoseExpanded(angles=a)
    A0 = hm.anchor_positions(skeleton, pose)
    b = a.copy()
    b[2, :, hm.BEND] -= math.radians(0.5)
    v = hm.anchor_positions(skeleton, hm.HandPoseExpanded(angles=b))[2, hm.CONTACT_ANCHOR] \
        - A0[2, hm.CONTACT_ANCHOR]
    v /= np.linalg.norm(v)
    obj = icosphere(R, 4, "tip", center=A0[2, hm.CONTACT_ANCHOR] - (R - depth) * v)
    return pose, obj


def test_mitigation_noop(sphere4, skeleton):
    pose = hm.HandPoseExpanded(hm.RigidTransform(translation=[1.0, 1.0, 1.0]))
    out, rep = ss.mitigate_penetration(pose, sphere4, skeleton)
    assert out == pose and rep.steps == 0 and rep.max_penetration == 0.0


def test_mitigation_resolves_single_tip(skeleton):
    pose, obj = _single_tip_case(skeleton)
    pen = ss.finger_penetration(pose, obj, skeleton)
    assert pen[2] == pytest.approx(0.001, abs=1e-4) and not np.delete(pen, 2).any()
    out, rep = ss.mitigate_penetration(pose, obj, skeleton)
    assert rep.steps <= 10 and rep.max_penetration <= 0.0
    anchors = hm.anchor_positions(skeleton, out).reshape(-1, 3)
    assert oracles.signed_distance(anchors, obj.vertices, obj.triangles).min() >= 0
    # only the penetrating finger moved
    assert np.array_equal(np.delete(out.angles, 2, axis=0), np.delete(pose.angles, 2, axis=0))
    assert hm.validate_pose(out).valid


def test_mitigation_monotone(skeleton):
    rng = np.random.default_rng(4)
    for depth in (0.002, 0.004, 0.008):
        pose, obj = _single_tip_case(skeleton, depth, R=0.01)
        pose = hm.disturb_pose(hm.HandPoseCompact(pose.wrist, np.zeros(5), np.full(5, 0.5),
                                                  np.full(5, 0.6)), 0.0, 0.0, rng)
        prev = np.inf
        for k in range(0, 30):
            _, rep = ss.mitigate_penetration(pose, obj, skeleton, max_steps=k)
            assert np.all(rep.finger_penetration <= ss.finger_penetration(pose, obj, skeleton))
            assert rep.max_penetration <= prev
            prev = rep.max_penetration


def test_descriptor_round_trip(sphere_space, tmp_path):
    space, objects = sphere_space
    ts = [TripletIndex(0, p, v) for p, v in ((0, 0), (1, 5), (9, 31))]
    out, failed = ss.synthesize_batch(ts, space, objects, master_seed=5)
    path = tmp_path / "d.jsonl"
    ss.write_descriptors(path, out)
    assert ss.read_descriptors(path) == out
    rec = json.loads(path.read_text().splitlines()[0])
    assert rec["sdv"] == 1
    q = rec["camera"]["extrinsics"]["quat"]
    assert len(q) == 4 and abs(np.linalg.norm(q) - 1.0) < 1e-12
    rec["sdv"] = 2
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(FormatError):
        ss.read_descriptors(path)
    path.write_text("{not json}\n")
    with pytest.raises(FormatError):
        ss.read_descriptors(path)
