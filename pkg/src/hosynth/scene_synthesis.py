"""Scene descriptors: everything needed to render one sampled triplet.

A descriptor fixes the disturbed hand pose, hand shape, camera pose and
intrinsics, and opaque background/texture ids. Each one carries the seed it
was built from, and rebuilding from that seed reproduces it bit for bit.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import hand_model as hm
from .ccv_space import TripletIndex, check_index
from .errors import FormatError, SynthError
from .rigid import RigidTransform
from .seeding import derive_seed
from .viewpoints import ViewpointSample, camera_extrinsics, disturb_viewpoint

SCHEMA_VERSION = 1


@dataclass
class Intrinsics:
    width: int = 224
    height: int = 224
    fx: float = 245.0
    fy: float = 245.0
    cx: float = 112.0
    cy: float = 112.0

    def to_dict(self):
        return {"fx": float(self.fx), "fy": float(self.fy), "cx": float(self.cx),
                "cy": float(self.cy), "width": int(self.width), "height": int(self.height)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["width"]), int(d["height"]), float(d["fx"]), float(d["fy"]),
                   float(d["cx"]), float(d["cy"]))


@dataclass
class SynthConfig:
    sigma_bend: float = math.radians(3.0)
    sigma_splay: float = math.radians(1.5)
    delta_u: float = 0.05
    delta_phi: float = math.radians(7.5)
    shape_sigma: float = hm.SHAPE_SIGMA
    camera_radius: float = 0.6
    intrinsics: Intrinsics = field(default_factory=Intrinsics)
    background_pool: int = 1000
    texture_pool: int = 100
    mitigation_step: float = math.radians(0.5)
    max_mitigation_steps: int = 200
    tau_pen: float = 0.002
    coupling: float = hm.DEFAULT_COUPLING
    limits: hm.JointLimits = field(default_factory=hm.default_limits)


@dataclass(eq=False)
class SceneDescriptor:
    triplet: TripletIndex
    object_id: str
    hand_pose: hm.HandPoseExpanded
    shape: hm.ShapeParams
    object_transform: RigidTransform
    viewpoint: ViewpointSample
    camera: RigidTransform            # camera-to-world
    intrinsics: Intrinsics
    background_id: int
    texture_id: int
    seed: int
    max_penetration: float = 0.0
    mitigation_steps: int = 0

    def to_dict(self):
        return {
            "sdv": SCHEMA_VERSION,
            "triplet": [int(i) for i in self.triplet],
            "object_id": self.object_id,
            "hand_pose": self.hand_pose.to_dict(),
            "shape": [float(v) for v in self.shape.coefficients],
            "object_transform": self.object_transform.to_dict(),
            "viewpoint": self.viewpoint.to_dict(),
            "camera": {"extrinsics": self.camera.to_dict(),
                       "intrinsics": self.intrinsics.to_dict()},
            "background_id": int(self.background_id),
            "texture_id": int(self.texture_id),
            "seed": int(self.seed),
            "diagnostics": {"max_penetration": float(self.max_penetration),
                            "mitigation_steps": int(self.mitigation_steps)},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("sdv") != SCHEMA_VERSION:
            raise FormatError(f"unsupported scene descriptor version {d.get('sdv')!r}")
        diag = d.get("diagnostics", {})
        return cls(TripletIndex(*d["triplet"]), d["object_id"],
                   hm.HandPoseExpanded.from_dict(d["hand_pose"]), hm.ShapeParams(d["shape"]),
                   RigidTransform.from_dict(d["object_transform"]),
                   ViewpointSample.from_dict(d["viewpoint"]),
                   RigidTransform.from_dict(d["camera"]["extrinsics"]),
                   Intrinsics.from_dict(d["camera"]["intrinsics"]),
                   int(d["background_id"]), int(d["texture_id"]), int(d["seed"]),
                   float(diag.get("max_penetration", 0.0)), int(diag.get("mitigation_steps", 0)))

    def __eq__(self, other):
        return isinstance(other, SceneDescriptor) and self.to_dict() == other.to_dict()

    __hash__ = None


# --------------------------------------------------------------------------
# penetration mitigation
# --------------------------------------------------------------------------

@dataclass
class MitigationReport:
    steps: int
    finger_penetration: np.ndarray    # (5,) depth in meters, 0 if outside
    max_penetration: float


def finger_penetration(pose, obj, skeleton):
    """Deepest anchor penetration per finger, shape (5,)."""
    anchors = hm.anchor_positions(skeleton, pose)
    sdf, _ = obj.signed_distance(anchors.reshape(-1, 3))
    return np.maximum(0.0, -sdf.reshape(hm.N_FINGERS, 6).min(axis=1))


def mitigate_penetration(pose, obj, skeleton, max_steps=200, step=math.radians(0.5),
                         limits=hm.DEFAULT_LIMITS):
    """Uncurl penetrating fingers a little at a time.

    Every step lowers all three bends of each still-penetrating finger by
    ``step`` (clamped to the limits). A probe configuration keeps uncurling,
    but a finger only adopts it when its penetration does not grow, so the
    returned depths never exceed the input ones. Non-penetrating fingers are
    never touched.
    """
    angles = np.array(pose.angles, dtype=float)
    probe = angles.copy()
    pen = finger_penetration(pose, obj, skeleton)
    active = pen > 0
    steps = 0
    while active.any() and steps < max_steps:
        trial = probe.copy()
        trial[active, :, hm.BEND] -= step
        trial = hm.clamp_expanded(trial, limits)
        moved = active & np.any(trial[:, :, hm.BEND] != probe[:, :, hm.BEND], axis=1)
        if not moved.any():
            break
        probe = trial
        # fingers are independent chains: each one's depth depends only on its
        # own angles, so mixing committed and probe fingers is safe
        new_pen = finger_penetration(hm.HandPoseExpanded(pose.wrist, probe), obj, skeleton)
        steps += 1
        for f in np.flatnonzero(active):
            if new_pen[f] <= pen[f]:
                angles[f] = probe[f]
                pen[f] = new_pen[f]
            active[f] = pen[f] > 0 and moved[f]
    out = hm.HandPoseExpanded(pose.wrist, angles)
    return out, MitigationReport(steps, pen, float(pen.max()))


# --------------------------------------------------------------------------
# synthesis
# --------------------------------------------------------------------------

def item_seed(master_seed, triplet):
    return derive_seed(master_seed, tuple(int(i) for i in triplet))


def synthesize(triplet, space, objects, config=None, seed=0):
    """Build the descriptor for ``triplet`` from a per-item ``seed``.

    Mitigation only runs when the disturbed pose penetrates deeper than
    ``tau_pen``. ``objects`` maps object index to :class:`ObjectModel`. Raises SynthError if
    penetration stays above ``tau_pen`` after mitigation.
    """
    cfg = config or SynthConfig()
    check_index(triplet, space.dims)
    triplet = TripletIndex(*(int(i) for i in triplet))
    rng = np.random.default_rng(seed)
    grasp = space.grasp(triplet)
    obj = objects[triplet.object_id]
    pose = hm.disturb_pose(grasp.pose, cfg.sigma_bend, cfg.sigma_splay, rng, cfg.limits,
                           cfg.coupling)
    shape = hm.sample_shape(rng, cfg.shape_sigma) if cfg.shape_sigma > 0 else hm.ShapeParams()
    skeleton = hm.build_skeleton(shape)
    pen = finger_penetration(pose, obj, skeleton)
    if pen.max() > cfg.tau_pen:
        pose, rep = mitigate_penetration(pose, obj, skeleton, cfg.max_mitigation_steps,
                                         cfg.mitigation_step, cfg.limits)
    else:
        # within tolerance already (accepted grasps may touch slightly inside)
        rep = MitigationReport(0, pen, float(pen.max()))
    if rep.max_penetration > cfg.tau_pen:
        raise SynthError(f"triplet {tuple(triplet)}: penetration {rep.max_penetration:.4f} m "
                         f"left after mitigation")
    vp = disturb_viewpoint(space.viewpoint(triplet), cfg.delta_u, cfg.delta_phi, rng)
    camera = camera_extrinsics(vp, cfg.camera_radius, obj.centroid)
    background = int(rng.integers(cfg.background_pool))
    texture = int(rng.integers(cfg.texture_pool))
    return SceneDescriptor(triplet, obj.id, pose, shape, RigidTransform(), vp, camera,
                           cfg.intrinsics, background, texture, int(seed),
                           rep.max_penetration, rep.steps)


def synthesize_batch(triplets, space, objects, config=None, master_seed=0):
    """Descriptors for many triplets; failures are returned separately."""
    out, failed = [], []
    for t in triplets:
        try:
            out.append(synthesize(t, space, objects, config, item_seed(master_seed, t)))
        except SynthError:
            failed.append(TripletIndex(*t))
    return out, failed


def write_descriptors(path, descriptors):
    with open(path, "w") as fh:
        for d in descriptors:
            fh.write(json.dumps(d.to_dict()) + "\n")


def read_descriptors(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(SceneDescriptor.from_dict(json.loads(line)))
                except (KeyError, ValueError, TypeError) as exc:
                    raise FormatError(f"{path}:{lineno}: malformed descriptor") from exc
    return out
