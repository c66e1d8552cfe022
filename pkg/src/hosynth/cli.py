"""``hosynth`` command line: grasp-gen, build-space, sample, synth, loop, symset, eval."""
import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import ccv_space as cs
from . import config as cfgmod
from . import grasp_forge as gf
from . import loop_harness as lh
from . import pose_eval as pe
from . import scene_synthesis as ss
from . import symmetry as sy
from .errors import ConfigError, FormatError, HosynthError
from .mesh import load_obj
from .rigid import RigidTransform, so3_exp
from .seeding import derive_seed


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _rng(cfg, *tags):
    return np.random.default_rng(derive_seed(cfg.seed, *tags))


def grasp_config(cfg):
    return gf.GraspConfig(offset=cfg.offset, n_sites=cfg.n_sites, w_rep=cfg.w_rep,
                          eps_contact=cfg.eps_contact, tau_pen=cfg.tau_pen,
                          max_iters=cfg.max_iters, gtol=cfg.gtol, ftol=cfg.ftol,
                          stall_window=cfg.stall_window, budget_factor=cfg.budget_factor,
                          residual_cap=cfg.residual_cap, threads=cfg.threads)


def loop_config(cfg):
    return lh.LoopConfig(n_objects=cfg.n_objects, n_poses=cfg.n_poses,
                         grid=(cfg.loop_grid_u, cfg.loop_grid_phi), epochs=cfg.epochs,
                         samples=cfg.samples, batch_size=cfg.batch_size, ratio=cfg.ratio,
                         online=cfg.online, learn_rate=cfg.learn_rate,
                         noise_sigma=cfg.noise_sigma, difficulty=cfg.difficulty,
                         difficulty_mu=cfg.difficulty_mu, difficulty_sigma=cfg.difficulty_sigma,
                         target_error=cfg.target_error)


def synth_config(cfg):
    cx = cfg.width / 2.0 if cfg.cx < 0 else cfg.cx
    cy = cfg.height / 2.0 if cfg.cy < 0 else cfg.cy
    return ss.SynthConfig(sigma_bend=math.radians(cfg.sigma_bend_deg),
                          sigma_splay=math.radians(cfg.sigma_splay_deg),
                          delta_u=cfg.delta_u, delta_phi=math.radians(cfg.delta_phi_deg),
                          shape_sigma=cfg.shape_sigma, camera_radius=cfg.camera_radius,
                          intrinsics=ss.Intrinsics(cfg.width, cfg.height, cfg.fx, cfg.fy, cx, cy),
                          background_pool=cfg.background_pool, texture_pool=cfg.texture_pool,
                          mitigation_step=math.radians(cfg.mitigation_step_deg),
                          max_mitigation_steps=cfg.max_mitigation_steps, tau_pen=cfg.tau_pen)


def experiment_seeds(cfg):
    if cfg.seeds:
        return list(cfg.seeds)
    return [derive_seed(cfg.seed, "loop", i) for i in range(cfg.n_seeds)]


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_manifest(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    base = os.path.dirname(os.path.abspath(path))

    def rel(p):
        return p if p is None or os.path.isabs(p) else os.path.join(base, p)
    for o in doc["objects"]:
        o["grasps"] = rel(o["grasps"])
        o["mesh"] = rel(o.get("mesh"))
    doc["weights"] = rel(doc["weights"])
    return doc


def space_from_manifest(doc, with_weights=True):
    pose_table = [gf.read_grasps(o["grasps"]) for o in doc["objects"]]
    n_u, n_phi = doc["grid"]
    space = cs.build_space(len(pose_table), doc["dims"][1], (n_u, n_phi), pose_table,
                           [o["id"] for o in doc["objects"]])
    if with_weights:
        space.weights = cs.load_weights(doc["weights"])
        if space.weights.dims != space.dims:
            raise ConfigError("weight snapshot does not match the manifest dims")
    return space


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_grasp_gen(args, cfg):
    obj = load_obj(args.mesh, args.object_id)
    stats = {}
    cands = gf.generate_poses(obj, cfg.target_count, grasp_config(cfg),
                              _rng(cfg, "grasp", obj.id), stats=stats)
    gf.write_grasps(args.out, cands)
    rej = ", ".join(f"{k}={v}" for k, v in sorted(stats["rejections"].items())) or "none"
    print(f"{obj.id}: accepted {stats['accepted']} of {stats['attempts']} attempts "
          f"(rejections: {rej})")
    return 0


def cmd_build_space(args, cfg):
    meshes = args.mesh or []
    if meshes and len(meshes) != len(args.grasps):
        raise ConfigError("give one --mesh per grasp file, in the same order")
    here = os.path.dirname(os.path.abspath(args.out))
    objects, counts = [], []
    for k, path in enumerate(args.grasps):
        cands = gf.read_grasps(path)
        if not cands:
            raise ConfigError(f"{path}: no grasps")
        counts.append(len(cands))
        objects.append({"id": cands[0].object_id, "grasps": os.path.relpath(path, here),
                        "mesh": os.path.relpath(meshes[k], here) if meshes else None})
    if len(set(counts)) != 1:
        raise ConfigError(f"pose counts differ across objects: {counts}")
    space = cs.build_space(len(objects), counts[0], (cfg.grid_u, cfg.grid_phi))
    weights = args.weights or os.path.splitext(args.out)[0] + ".ccvw"
    cs.save_weights(weights, space.weights)
    _write_json(args.out, {
        "dims": list(space.dims), "grid": [cfg.grid_u, cfg.grid_phi], "objects": objects,
        "weights": os.path.relpath(weights, here)})
    print(f"space dims {space.dims}, {space.size} triplets")
    return 0


def cmd_sample(args, cfg):
    doc = load_manifest(args.manifest)
    wmap = cs.load_weights(args.weights or doc["weights"])
    picks = cs.sample_triplets(wmap, cfg.count, _rng(cfg, "sample"))
    with open(args.out, "w") as fh:
        for t in picks:
            fh.write(json.dumps({"triplet": list(t)}) + "\n")
    print(f"drew {len(picks)} triplets")
    return 0


def read_triplets(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(cs.TripletIndex(*json.loads(line)["triplet"]))
                except (KeyError, ValueError, TypeError) as exc:
                    raise FormatError(f"{path}:{lineno}: malformed triplet") from exc
    return out


def cmd_synth(args, cfg):
    doc = load_manifest(args.manifest)
    if any(o["mesh"] is None for o in doc["objects"]):
        raise ConfigError("manifest has no mesh references; rebuild it with --mesh")
    space = space_from_manifest(doc, with_weights=False)
    objects = {k: load_obj(o["mesh"], o["id"]) for k, o in enumerate(doc["objects"])}
    triplets = read_triplets(args.triplets)
    descs, failed = ss.synthesize_batch(triplets, space, objects, synth_config(cfg),
                                        derive_seed(cfg.seed, "synth"))
    ss.write_descriptors(args.out, descs)
    print(f"wrote {len(descs)} scene descriptors, {len(failed)} failed mitigation")
    return 0


def cmd_loop(args, cfg):
    rep = lh.run_experiment(loop_config(cfg), experiment_seeds(cfg))
    os.makedirs(args.out_dir, exist_ok=True)
    lh.write_curves_csv(os.path.join(args.out_dir, "curves.csv"), rep)
    for scheme, wmap in rep.final_maps.items():
        cs.save_weights(os.path.join(args.out_dir, f"weights_{scheme}.ccvw"), wmap)
    chosen = rep.final_maps["online" if cfg.online else "uniform"]
    cs.save_weights(os.path.join(args.out_dir, "weights_final.ccvw"), chosen)
    print(f"final mean error: online {rep.final['online']:.6g}, uniform {rep.final['uniform']:.6g}; "
          f"online lower on {rep.wins}/{len(rep.seeds)} seeds, sign-test p = {rep.p_value:.3g}")
    return 0


def cmd_symset(args, cfg):
    obj = load_obj(args.mesh, args.object_id)
    table = sy.load_symmetry_table(args.spec)
    if obj.id in table:
        spec = table[obj.id]
    elif len(table) == 1:
        spec = next(iter(table.values()))
    else:
        raise ConfigError(f"no symmetry entry for {obj.id!r} in {args.spec}")
    sset = sy.symmetry_set(obj, spec, cfg.revolution_steps, cfg.icp_iters, cfg.sym_tol)
    sy.save_symmetry_set(args.out, sset)
    print(f"{obj.id}: {len(sset)} rotations, max residual {sset.residuals.max():.3g} m, "
          f"{len(sset.dropped)} dropped")
    return 0


EVAL_COLUMNS = ["id", "mpjpe", "mpcpe", "mssd", "loss_loc", "loss_cor", "loss_ord",
                "loss_sym", "loss_total"]
MODES = {"mpcpe": (1.0, 1.0, 0.0), "sym": (0.0, 0.0, 1.0)}


def read_predictions(path):
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    d = json.loads(line)
                    out[str(d["id"])] = pe.PosePrediction.from_dict(d)
                except (KeyError, ValueError, TypeError, HosynthError) as exc:
                    raise FormatError(f"{path}:{lineno}: malformed pose record") from exc
    return out


def evaluate_records(pred, gt, obj, sym, mode):
    """Per-record metric rows (dicts) plus the aggregate mean row."""
    lambdas = MODES[mode]
    corners = obj.corners
    rows = []
    for rid in sorted(gt):
        p, g = pred[rid], gt[rid]
        b = pe.loss_total(p, g, corners, lambdas, sym=sym)
        tp = RigidTransform.from_matrix(so3_exp(p.object_rotation), p.object_centroid)
        tg = RigidTransform.from_matrix(so3_exp(g.object_rotation), g.object_centroid)
        rows.append({"id": rid, "mpjpe": pe.mpjpe(p.hand_joints, g.hand_joints),
                     "mpcpe": pe.mpcpe(p.corners(corners), g.corners(corners)),
                     "mssd": pe.mssd(tp, tg, sym, obj.vertices),
                     "loss_loc": b.loc, "loss_cor": b.cor, "loss_ord": b.ord,
                     "loss_sym": b.sym, "loss_total": b.total})
    mean = {"id": "mean"}
    for c in EVAL_COLUMNS[1:]:
        mean[c] = float(np.mean([r[c] for r in rows])) if rows else 0.0
    return rows, mean


def cmd_eval(args, cfg):
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {sorted(MODES)}")
    pred, gt = read_predictions(args.pred), read_predictions(args.gt)
    orphans = sorted(set(pred) ^ set(gt))
    if orphans:
        raise ConfigError("record ids without a counterpart: " + ", ".join(orphans))
    obj = load_obj(args.mesh)
    sym = sy.load_symmetry_set(args.symmetry) if args.symmetry else sy.SymmetrySet(np.eye(3)[None])
    rows, mean = evaluate_records(pred, gt, obj, sym.rotations, cfg.mode)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for r in rows + [mean]:
            w.writerow([r["id"]] + [repr(float(r[c])) for c in EVAL_COLUMNS[1:]])
    print(f"{len(rows)} records: mean MPJPE {mean['mpjpe']:.6g} m, MPCPE {mean['mpcpe']:.6g} m, "
          f"MSSD {mean['mssd']:.6g} m")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _knob_parent():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration (each flag mirrors a config-file key)")
    g.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value file")
    for k in cfgmod.KNOBS.values():
        g.add_argument("--" + k.name.replace("_", "-"), dest=k.name, default=argparse.SUPPRESS,
                       metavar=k.type.__name__.strip("_").upper(),
                       help=f"{k.doc} (default: {k.default!r})".replace("%", "%%"))
    return p


def build_parser():
    parent = _knob_parent()
    ap = argparse.ArgumentParser(prog="hosynth", parents=[parent],
                                 description="Hand-object-viewpoint sampling and synthesis engine.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grasp-gen", parents=[parent], help="synthesize grasps for one mesh")
    p.add_argument("mesh")
    p.add_argument("--out", required=True)
    p.add_argument("--object-id", default=None)
    p.set_defaults(func=cmd_grasp_gen)

    p = sub.add_parser("build-space", parents=[parent], help="assemble a space manifest")
    p.add_argument("grasps", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--mesh", action="append", help="mesh for each grasp file, in order")
    p.add_argument("--weights", default=None, help="weight snapshot path")
    p.set_defaults(func=cmd_build_space)

    p = sub.add_parser("sample", parents=[parent], help="draw triplets from a weight map")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("synth", parents=[parent], help="scene descriptors for triplets")
    p.add_argument("manifest")
    p.add_argument("--triplets", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("loop", parents=[parent], help="online vs uniform experiment")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("symset", parents=[parent], help="symmetry set of a mesh")
    p.add_argument("mesh")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    p.add_argument("--object-id", default=None)
    p.set_defaults(func=cmd_symset)

    p = sub.add_parser("eval", parents=[parent], help="pose metrics and losses")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--mesh", required=True, help="object mesh in its canonical frame")
    p.add_argument("--symmetry", default=None, help="symmetry set JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return ap


def resolve_config(args):
    flags = {k: getattr(args, k) for k in cfgmod.KNOBS if hasattr(args, k)}
    file_values = cfgmod.load_config(args.config) if getattr(args, "config", None) else {}
    return cfgmod.resolve(file_values, flags)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (HosynthError, OSError) as exc:
        print(f"hosynth {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
