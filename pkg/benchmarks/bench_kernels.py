"""Time the numba kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from hosynth import hand_model as hm
from hosynth import kernels
from hosynth.mesh import icosphere


def _best(fn, repeat):
    fn()  # warm-up (jit compile)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    obj = icosphere(0.04, 3)
    p = rng.uniform(-0.06, 0.06, size=(2000, 3))
    tri = (obj.v0, obj.v1, obj.v2, obj.tri_centers, obj.tri_radii)
    w = rng.uniform(0.1, 2.0, 4 * 100 * 288)
    cap = kernels.tree_capacity(len(w))
    u = rng.random(4096)
    skel = hm.build_skeleton()
    pose = hm.random_compact_pose(rng)
    v = pose.finger_vector().reshape(5, 3)
    chain = (skel.rest_offsets, skel.tsb_frames, skel.anchor_points, v[:, 0].copy(),
             v[:, 1].copy(), v[:, 2].copy(), pose.wrist.rotation, pose.wrist.translation,
             hm.DEFAULT_COUPLING)
    angles = hm.expand_pose(pose).angles
    return {
        "closest_points (2000 pts)": (
            lambda: kernels.closest_points_nb(p, *tri),
            lambda: kernels.closest_points_np(p, *tri)),
        "inside_mask (2000 pts)": (
            lambda: kernels.inside_mask_nb(p, *tri[:3], kernels.RAY_DIRS, *tri[3:]),
            lambda: kernels.inside_mask_np(p, *tri[:3], kernels.RAY_DIRS)),
        "tree_draw (4096 of 115200)": (
            lambda: kernels.tree_draw_nb(kernels.build_tree(w), cap, u),
            lambda: kernels.tree_draw_np(kernels.build_tree(w), cap, u)),
        "compact chain + jacobian": (
            lambda: kernels.compact_chain_nb(*chain),
            lambda: hm.compact_kinematics_np(skel, pose)),
        "local fk": (
            lambda: kernels.local_fk_nb(skel.rest_offsets, skel.tsb_frames, angles),
            lambda: kernels.local_fk_np(skel.rest_offsets, skel.tsb_frames, angles)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':30s} {'numba':>12s} {'numpy':>12s} {'speedup':>8s}")
    for name, (nb, npy) in cases(rng).items():
        a, b = _best(nb, args.repeat), _best(npy, args.repeat)
        print(f"{name:30s} {a * 1e3:10.3f}ms {b * 1e3:10.3f}ms {b / a:7.1f}x")


if __name__ == "__main__":
    main()
