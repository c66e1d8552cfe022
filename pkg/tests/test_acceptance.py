"""Acceptance criteria 1-10, each timed and reported as one pass/fail line."""
import csv
import json
import math
import os
import time

import numpy as np
import pytest
from scipy.stats import chisquare

import conftest
import oracles
from hosynth import ccv_space as cs
from hosynth import grasp_forge as gf
from hosynth import hand_model as hm
from hosynth import loop_harness as lh
from hosynth import pose_eval as pe
from hosynth import scene_synthesis as ss
from hosynth import symmetry as sy
from hosynth.cli import main, read_predictions, read_triplets
from hosynth.mesh import box, cylinder, icosphere, save_obj
from hosynth.rigid import RigidTransform, axis_angle, random_rotation, rotation_angle
from hosynth.viewpoints import direction_from, sphere_grid


def _report(n, ok, detail, elapsed, limit):
    fast = elapsed < limit
    status = "PASS" if ok and fast else "FAIL"
    line = f"criterion {n:2d}: {status}  {detail}  [{elapsed:.2f} s, limit {limit:g} s]"
    conftest.ACCEPTANCE_LINES.append((n, line))
    print(line)
    assert ok, line
    assert fast, line


def test_criterion_01_reweighting():
    t = time.perf_counter()
    top, bottom = cs.weight_update(0.5, 0.1, 0.5), cs.weight_update(0.1, 0.1, 0.5)
    rng = np.random.default_rng(1)
    w = cs.WeightMap.uniform((5, 6, 7))
    lo, hi = math.inf, -math.inf
    for _ in range(100):
        picks = cs.sample_triplets(w, 50, rng)
        w = cs.apply_epoch_feedback(w, [cs.FeedbackRecord(p, float(e))
                                        for p, e in zip(picks, rng.lognormal(0, 1, 50))])
        lo, hi = min(lo, w.weights.min()), max(hi, w.weights.max())
    ok = top == 2.0 and bottom == 2.0 / 3.0 and lo >= 0.1 and hi <= 2.0
    _report(1, ok, f"w(e_max)={top!r} w(e_min)={bottom!r} range over 100 epochs "
                   f"[{lo:.3f}, {hi:.3f}]", time.perf_counter() - t, 1)


def test_criterion_02_cardinality():
    t = time.perf_counter()
    s = cs.build_space(20, 100, (12, 24))
    g = sphere_grid(12, 24)
    D = np.array([v.direction for v in g])
    distinct = len(np.unique(np.round(D, 12), axis=0))
    ok = s.size == 576_000 and len(g) == 288 and distinct == 288
    _report(2, ok, f"{s.size} triplets, {len(g)} viewpoints ({distinct} distinct)",
            time.perf_counter() - t, 1)


def test_criterion_03_sampling():
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    w = cs.WeightMap((3, 1, 1), np.array([3.0, 1.0, 1.0]))
    counts = np.zeros(3)
    for _ in range(100_000):
        counts[cs.sample_triplets(w, 1, rng)[0].object_id] += 1
    freq = counts / 100_000
    dev = np.abs(freq - [0.6, 0.2, 0.2]).max()
    big = cs.WeightMap((20, 100, 288), rng.uniform(0.1, 2.0, (20, 100, 288)))
    epoch = cs.sample_triplets(big, 4096, rng)
    dup = len(epoch) - len(set(epoch))
    _report(3, dev <= 0.01 and dup == 0,
            f"frequencies {np.round(freq, 4).tolist()} (max dev {dev:.4f}), "
            f"{dup} duplicates in a 4096 draw", time.perf_counter() - t, 5)


def test_criterion_04_directions():
    t = time.perf_counter()
    pole = np.array_equal(direction_from(1.0, 0.7), [0.0, 0.0, 1.0])
    equator = np.array_equal(direction_from(0.0, 0.0), [1.0, 0.0, 0.0])
    mid = np.abs(direction_from(0.5, math.pi / 2) - [0.0, math.sqrt(3) / 2, 0.5]).max()
    rng = np.random.default_rng(4)
    n = 1_000_000
    u, phi = rng.uniform(-1, 1, n), rng.uniform(0, 2 * math.pi, n)
    s = np.sqrt(1 - u * u)
    d = np.column_stack([s * np.cos(phi), s * np.sin(phi), u])
    band = np.minimum(((d[:, 2] + 1) * 5).astype(int), 9)
    sector = np.minimum((np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * math.pi) / (2 * math.pi) * 10)
                        .astype(int), 9)
    p = chisquare(np.bincount(band * 10 + sector, minlength=100)).pvalue
    _report(4, pole and equator and mid <= 1e-6 and p > 0.001,
            f"pole exact={pole} equator exact={equator} mid err={mid:.1e} chi-square p={p:.3f}",
            time.perf_counter() - t, 10)


def _ring_group(k):
    return np.stack([axis_angle([0, 0, 1], 2 * math.pi * i / k) for i in range(k)])


def test_criterion_05_loss_oracles():
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    canon = np.array(oracles.box_corners([-0.03, -0.02, -0.015], [0.03, 0.02, 0.015]))
    worst = {"loc": 0.0, "cor": 0.0, "ord": 0.0, "sym": 0.0, "mssd": 0.0}

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-300)
    S = _ring_group(36)
    V = box((0.06, 0.04, 0.03), 2).vertices
    for _ in range(1000):
        p, g = rng.normal(size=(22, 3)), rng.normal(size=(22, 3))
        worst["loc"] = max(worst["loc"], rel(pe.loss_loc(p, g), oracles.loc_loss(p, g)))
        r, gc = rng.normal(size=3), rng.normal(0, 0.05, (8, 3))
        worst["cor"] = max(worst["cor"], rel(pe.loss_cor(r, canon, gc),
                                             oracles.cor_loss(r, canon.tolist(), gc.tolist())))
        nv = rng.normal(size=3)
        nv /= np.linalg.norm(nv)
        h, c = rng.normal(0, 0.05, (21, 3)), rng.normal(0, 0.05, (8, 3))
        relm = pe.depth_relations(rng.normal(0, 0.05, (21, 3)), c, nv)
        a = pe.loss_ord(h, c, relm, nv)
        b = oracles.ord_loss(h.tolist(), c.tolist(), relm.astype(int).tolist(), nv.tolist())
        worst["ord"] = max(worst["ord"], rel(a, b) if b else abs(a))
        rp, rg = rng.normal(size=3), rng.normal(size=3)
        worst["sym"] = max(worst["sym"], rel(pe.loss_sym(rp, rg, S, canon),
                                             oracles.sym_loss(rp, rg, S.tolist(), canon.tolist())))
    for _ in range(100):
        A = RigidTransform.from_matrix(random_rotation(rng), rng.normal(0, 0.1, 3))
        B = RigidTransform.from_matrix(random_rotation(rng), rng.normal(0, 0.1, 3))
        ref = oracles.mssd(A.rotation.tolist(), A.translation.tolist(), B.rotation.tolist(),
                           B.translation.tolist(), S.tolist(), V.tolist())
        worst["mssd"] = max(worst["mssd"], rel(pe.mssd(A, B, S, V), ref))
    ok = max(worst.values()) <= 1e-12
    detail = "max rel err " + " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + " (|S|=36)"
    _report(5, ok, detail, time.perf_counter() - t, 30)


def test_criterion_06_symmetry():
    t = time.perf_counter()
    obj = box((1.0, 1.0, 1.0), 4, "unit-box")
    spec = sy.parse_symmetry_row("unit-box x,y,z 180,180,180")[1]
    sset = sy.symmetry_set(obj, spec)
    res, within = sy.check_symmetry_set(obj, sset, 1e-3)
    # independent audit: every rotation maps the vertex cloud onto itself
    c = obj.vertices - obj.vertices.mean(axis=0)
    audit = max(sy.hausdorff(c @ R.T, c) for R in sset.rotations) / obj.diameter
    rng = np.random.default_rng(6)
    half = rng.normal(size=(300, 3)) * [0.05, 0.03, 0.02] + [0.02, 0.0, 0.0]
    cloud = np.vstack([half, half @ axis_angle([0, 0, 1], math.pi).T])
    cloud -= cloud.mean(axis=0)
    dR, _, _ = sy.icp_refine(cloud, axis_angle([0, 0, 1], math.pi - 0.01))
    icp_err = abs(rotation_angle(dR @ axis_angle([0, 0, 1], math.pi - 0.01)) - math.pi)
    ok = len(sset) == 4 and within and audit <= 1e-3 and icp_err <= 1e-3
    _report(6, ok, f"|S|={len(sset)}, worst self-map {audit:.1e} x diameter, "
                   f"ICP residual angle {icp_err:.1e} rad", time.perf_counter() - t, 30)


def _oracle_check(cand, obj, skel):
    anchors = hm.anchor_positions(skel, hm.expand_pose(cand.pose))
    sdf = oracles.signed_distance(anchors.reshape(-1, 3), obj.vertices, obj.triangles)
    sdf = sdf.reshape(hm.N_FINGERS, 6)
    pads = anchors[:, hm.CONTACT_ANCHOR]
    dist = oracles.point_mesh_distance(pads, obj.vertices, obj.triangles)
    assigned = {a.finger_id for a in cand.assignments}
    thumb = 0 in assigned and dist[0] <= 0.002
    finger = any(dist[f] <= 0.002 for f in assigned if f != 0)
    return (thumb and finger and max(0.0, -sdf.min()) <= 0.002
            and hm.validate_pose(hm.expand_pose(cand.pose)).valid)


def test_criterion_07_grasp_validity():
    t = time.perf_counter()
    skel = hm.build_skeleton()
    prims = [icosphere(0.04, 3, "sphere"), box((0.06, 0.04, 0.03), 6, "box"),
             cylinder(0.025, 0.12, object_id="cylinder")]
    parts, ok = [], True
    for k, obj in enumerate(prims):
        stats = {}
        cands = gf.generate_poses(obj, 100, gf.GraspConfig(), np.random.default_rng(70 + k),
                                  skel, stats)
        passed = sum(_oracle_check(c, obj, skel) for c in cands)
        ok &= len(cands) >= 60 and passed == len(cands)
        parts.append(f"{obj.id} {len(cands)} accepted/{stats['attempts']} tries, "
                     f"{passed} re-pass")
    _report(7, ok, "; ".join(parts), time.perf_counter() - t, 300)


def _planar_tip(base, lengths, bends):
    x, z, acc = base[0], base[2], 0.0
    for L, b in zip(lengths, bends):
        acc += b
        x += L * math.cos(acc)
        z += L * math.sin(acc)
    return np.array([x, base[1], z])


def test_criterion_08_kinematics():
    t = time.perf_counter()
    skel = hm.build_skeleton()
    joints = hm.finger_joints(2)
    base = skel.rest_offsets[joints[0]]
    L = [np.linalg.norm(skel.rest_offsets[j]) for j in joints[1:]]
    rng = np.random.default_rng(8)
    planar = 0.0
    for _ in range(200):
        bends = rng.uniform(-0.1, 1.5, 3)
        a = np.zeros((5, 3, 3))
        a[2, :, hm.BEND] = bends
        tip = hm.forward_kinematics(skel, hm.HandPoseExpanded(angles=a))[hm.FINGERTIP_IDS[2]]
        planar = max(planar, np.abs(tip - _planar_tip(base, L, bends)).max())
    independent, equi = True, 0.0
    for _ in range(10_000):
        wrist = RigidTransform.from_matrix(random_rotation(rng), rng.normal(0, 0.2, 3))
        pose = hm.expand_pose(hm.random_compact_pose(rng, wrist=wrist))
        pos = hm.forward_kinematics(skel, pose)
        f = int(rng.integers(5))
        a = pose.angles.copy()
        a[f, :, hm.BEND] = rng.uniform(-0.1, 1.5, 3)
        pos2 = hm.forward_kinematics(skel, hm.HandPoseExpanded(pose.wrist, a))
        others = [j for g in range(5) if g != f for j in hm.finger_joints(g)] + [0]
        independent &= bool(np.array_equal(pos[others], pos2[others]))
        T = RigidTransform.from_matrix(random_rotation(rng), rng.normal(0, 0.2, 3))
        moved = hm.forward_kinematics(skel, hm.HandPoseExpanded(T.compose(pose.wrist), pose.angles))
        equi = max(equi, np.abs(moved - T.apply(pos)).max())
    ok = planar <= 1e-9 and independent and equi <= 1e-9
    _report(8, ok, f"planar err {planar:.1e} m, independence exact={independent}, "
                   f"equivariance err {equi:.1e} m over 10^4 poses", time.perf_counter() - t, 10)


def test_criterion_09_online_vs_uniform():
    t = time.perf_counter()
    rep = lh.run_experiment(lh.LoopConfig(epochs=50), list(range(20)))
    on, off = rep.final["online"], rep.final["uniform"]
    ok = on <= off and rep.p_value < 0.05
    _report(9, ok, f"final mean error online {on:.5f} vs uniform {off:.5f}, online lower on "
                   f"{rep.wins}/20 seeds, sign-test p={rep.p_value:.1e}", time.perf_counter() - t, 120)


def _twice(tmp, argv_fn, outputs):
    blobs = []
    for k in range(2):
        d = tmp / f"run{k}"
        d.mkdir(exist_ok=True)
        assert main(argv_fn(d)) == 0
        blobs.append([(d / o).read_bytes() for o in outputs])
    return blobs[0] == blobs[1]


def test_criterion_10_determinism_round_trip(tmp_path):
    t = time.perf_counter()
    save_obj(icosphere(0.04, 3, "sphere"), tmp_path / "sphere.obj")
    save_obj(box((0.06, 0.04, 0.03), 4, "box"), tmp_path / "box.obj")
    (tmp_path / "sym.txt").write_text("box x,y,z 180,180,180\n")
    res = {}
    fast = ["--target-count", "2", "--budget-factor", "10", "--seed", "11"]
    res["grasp-gen"] = _twice(tmp_path, lambda d: ["grasp-gen", str(tmp_path / "sphere.obj"),
                                                   "--out", str(d / "g.jsonl"), *fast], ["g.jsonl"])
    res["build-space"] = _twice(tmp_path, lambda d: [
        "build-space", str(d / "g.jsonl"), "--mesh", str(tmp_path / "sphere.obj"),
        "--out", str(d / "space.json"), "--grid-u", "3", "--grid-phi", "4"],
        ["space.json", "space.ccvw"])
    res["sample"] = _twice(tmp_path, lambda d: ["sample", str(d / "space.json"), "--out",
                                                str(d / "t.jsonl"), "--count", "8", "--seed", "5"],
                           ["t.jsonl"])
    res["synth"] = _twice(tmp_path, lambda d: ["synth", str(d / "space.json"), "--triplets",
                                               str(d / "t.jsonl"), "--out", str(d / "s.jsonl"),
                                               "--seed", "5"], ["s.jsonl"])
    loop = ["--n-objects", "2", "--n-poses", "3", "--loop-grid-u", "2", "--loop-grid-phi", "2",
            "--epochs", "5", "--samples", "6", "--n-seeds", "3", "--seed", "9"]
    res["loop"] = _twice(tmp_path, lambda d: ["loop", "--out-dir", str(d / "loop"), *loop],
                         ["loop/curves.csv", "loop/weights_online.ccvw",
                          "loop/weights_uniform.ccvw", "loop/weights_final.ccvw"])
    res["symset"] = _twice(tmp_path, lambda d: ["symset", str(tmp_path / "box.obj"),
                                                str(tmp_path / "sym.txt"), "--out",
                                                str(d / "sym.json")], ["sym.json"])
    rng = np.random.default_rng(10)
    for name in ("pred", "gt"):
        recs = [{"id": f"r{i}", **pe.PosePrediction(rng.normal(0, 0.05, (21, 3)),
                                                    rng.normal(0, 0.1, 3),
                                                    rng.normal(0, 1, 3)).to_dict()}
                for i in range(5)]
        (tmp_path / f"{name}.jsonl").write_text("".join(json.dumps(r) + "\n" for r in recs))
    res["eval"] = _twice(tmp_path, lambda d: ["eval", str(tmp_path / "pred.jsonl"),
                                              str(tmp_path / "gt.jsonl"), "--mesh",
                                              str(tmp_path / "box.obj"), "--symmetry",
                                              str(d / "sym.json"), "--out", str(d / "m.csv")],
                         ["m.csv"])

    d = tmp_path / "run0"
    rt = {}
    g = gf.read_grasps(d / "g.jsonl")
    gf.write_grasps(tmp_path / "g2.jsonl", g)
    rt["grasps"] = gf.read_grasps(tmp_path / "g2.jsonl") == g and \
        (tmp_path / "g2.jsonl").read_bytes() == (d / "g.jsonl").read_bytes()
    w = cs.load_weights(d / "space.ccvw")
    cs.save_weights(tmp_path / "w2.ccvw", w)
    rt["weights"] = (tmp_path / "w2.ccvw").read_bytes() == (d / "space.ccvw").read_bytes()
    man = json.loads((d / "space.json").read_text())
    rt["manifest"] = json.loads(json.dumps(man)) == man and man["dims"] == [1, len(g), 12]
    trip = read_triplets(d / "t.jsonl")
    rt["triplets"] = "".join(json.dumps({"triplet": list(x)}) + "\n" for x in trip) == \
        (d / "t.jsonl").read_text()
    sc = ss.read_descriptors(d / "s.jsonl")
    ss.write_descriptors(tmp_path / "s2.jsonl", sc)
    rt["scenes"] = ss.read_descriptors(tmp_path / "s2.jsonl") == sc and \
        (tmp_path / "s2.jsonl").read_bytes() == (d / "s.jsonl").read_bytes()
    curves = lh.read_curves_csv(d / "loop" / "curves.csv")
    rt["curves"] = len(curves) == 6 and all(len(v) == 5 for v in curves.values())
    s = sy.load_symmetry_set(d / "sym.json")
    sy.save_symmetry_set(tmp_path / "sym2.json", s)
    rt["symset"] = sy.load_symmetry_set(tmp_path / "sym2.json") == s
    preds = read_predictions(tmp_path / "pred.jsonl")
    rt["poses"] = all(pe.PosePrediction.from_dict(p.to_dict()).to_dict() == p.to_dict()
                      for p in preds.values())
    with open(d / "m.csv") as fh:
        rows = list(csv.reader(fh))
    rt["metrics"] = all(repr(float(x)) == x for r in rows[1:] for x in r[1:])
    bad = [k for k, v in {**res, **rt}.items() if not v]
    ok = not bad
    _report(10, ok, f"{sum(res.values())}/{len(res)} subcommands byte-identical, "
                    f"{sum(rt.values())}/{len(rt)} formats round-trip"
                    + (f", failing: {bad}" if bad else ""), time.perf_counter() - t, 120)
