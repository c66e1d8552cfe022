"""Skeletal right hand with twist-splay-bend joint axes.

Joint layout (21 joints)::

    0                wrist (root)
    1 + 4f + 0       finger f base joint (MCP; CMC for the thumb)
    1 + 4f + 1       proximal joint (PIP; thumb MCP)
    1 + 4f + 2       distal joint (DIP; thumb IP)
    1 + 4f + 3       fingertip (no DoF)

with f = 0 thumb, 1 index, 2 middle, 3 ring, 4 little.

Wrist frame: +x points from the wrist towards the middle-finger knuckle,
+z is the palm normal (palmar side), +y = z cross x (ulnar side; the thumb
sits at -y).

Every rotational joint carries an orthonormal triad (twist, splay, bend)
expressed in the wrist frame at rest. Twist runs along the bone, positive
bend curls the finger towards the palm, splay is their cross product.
All rest offsets are expressed in the wrist frame, so joint k of a chain sits
at ``p[k-1] + G[k-1] @ offset[k]`` where ``G`` is the accumulated rotation.

Canonical rest table (meters, wrist frame, thumb first)::

    finger   base joint position          bone lengths (proximal, middle, distal)
    thumb    (0.022, -0.022, 0.008)       0.046  0.032  0.028
    index    (0.086, -0.024, 0.000)       0.040  0.024  0.020
    middle   (0.091,  0.000, 0.000)       0.045  0.028  0.022
    ring     (0.086,  0.020, 0.000)       0.042  0.027  0.021
    little   (0.078,  0.038, 0.000)       0.033  0.019  0.019

Middle-finger chain length (wrist to tip along the bones) is 0.186 m.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import InvalidArgument
from .rigid import RigidTransform, axis_angle, skew

N_JOINTS = 21
N_FINGERS = 5
FINGER_NAMES = ("thumb", "index", "middle", "ring", "little")
JOINT_SUFFIX = ("base", "proximal", "distal", "tip")
TWIST, SPLAY, BEND = 0, 1, 2

DEFAULT_COUPLING = 2.0 / 3.0
SHAPE_DIM = 10
SHAPE_GAIN = 0.05
SCALE_RANGE = (0.5, 1.5)
SHAPE_SIGMA = 0.5
SHAPE_CLAMP = 2.0

_BASE_POS = np.array([
    [0.022, -0.022, 0.008],
    [0.086, -0.024, 0.0],
    [0.091, 0.0, 0.0],
    [0.086, 0.020, 0.0],
    [0.078, 0.038, 0.0],
])
_BONES = np.array([
    [0.046, 0.032, 0.028],
    [0.040, 0.024, 0.020],
    [0.045, 0.028, 0.022],
    [0.042, 0.027, 0.021],
    [0.033, 0.019, 0.019],
])
_POINTING = np.array([
    [1.0, -1.0, 0.15],
    [1.0, -0.06, 0.0],
    [1.0, 0.0, 0.0],
    [1.0, 0.05, 0.0],
    [1.0, 0.12, 0.0],
])
# curl direction per finger; the thumb flexes obliquely across the palm so
# that its pad opposes the finger pads
_CURL = np.array([
    [0.0, 0.7, 0.7],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, 1.0],
])

# fingertip anchors in the distal (twist, splay, bend) coordinates, relative
# to the fingertip joint; index 1 (pad centre) is the contact point
PAD_BACK = 0.008
PAD_DEPTH = 0.006
PAD_RING = 0.004
CONTACT_ANCHOR = 1


def _anchor_template(width=1.0):
    pad = np.array([-PAD_BACK, PAD_DEPTH * width, 0.0])
    r = PAD_RING * width
    return np.array([
        [0.0, 0.0, 0.0],
        pad,
        pad + [r, 0.0, 0.0],
        pad - [r, 0.0, 0.0],
        pad + [0.0, 0.0, r],
        pad - [0.0, 0.0, r],
    ])


def finger_joints(f):
    return [1 + 4 * f + k for k in range(4)]


FINGERTIP_IDS = np.array([finger_joints(f)[3] for f in range(N_FINGERS)])


def _default_parent():
    parent = np.full(N_JOINTS, -1, dtype=np.int64)
    for f in range(N_FINGERS):
        j = finger_joints(f)
        parent[j[0]] = 0
        parent[j[1]], parent[j[2]], parent[j[3]] = j[0], j[1], j[2]
    return parent


def _triad(pointing, curl):
    t = pointing / np.linalg.norm(pointing)
    b = np.cross(t, curl)
    b /= np.linalg.norm(b)
    s = np.cross(b, t)
    return np.column_stack([t, s, b])


@dataclass(frozen=True)
class ShapeParams:
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(SHAPE_DIM))

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if c.shape != (SHAPE_DIM,):
            raise InvalidArgument(f"shape needs {SHAPE_DIM} coefficients, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise InvalidArgument("shape coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    def length_scales(self):
        return np.clip(1.0 + SHAPE_GAIN * self.coefficients[:5], *SCALE_RANGE)

    def width_scales(self):
        return np.clip(1.0 + SHAPE_GAIN * self.coefficients[5:], *SCALE_RANGE)

    def __eq__(self, other):
        return isinstance(other, ShapeParams) and np.array_equal(
            self.coefficients, other.coefficients)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class HandSkeleton:
    parent: np.ndarray
    rest_offsets: np.ndarray    # (21, 3)
    tsb_frames: np.ndarray      # (21, 3, 3), columns twist/splay/bend
    anchor_points: np.ndarray   # (5, 6, 3) in distal tsb coordinates
    names: tuple = ()
    fingertip_ids: np.ndarray = field(default_factory=lambda: FINGERTIP_IDS.copy())

    @property
    def joint_count(self):
        return len(self.parent)

    def rest_positions(self):
        pos = np.zeros((N_JOINTS, 3))
        for j in range(1, N_JOINTS):
            pos[j] = pos[self.parent[j]] + self.rest_offsets[j]
        return pos

    def chain_length(self, f):
        return float(sum(np.linalg.norm(self.rest_offsets[j]) for j in finger_joints(f)))

    def reach(self):
        """Wrist-to-fingertip distance of the longest finger, fully extended."""
        rest = self.rest_positions()
        return float(max(np.linalg.norm(rest[t]) for t in self.fingertip_ids))


def _joint_names():
    names = ["wrist"]
    for f in FINGER_NAMES:
        names += [f"{f}_{s}" for s in JOINT_SUFFIX]
    return tuple(names)


def canonical_offsets():
    offsets = np.zeros((N_JOINTS, 3))
    frames = np.zeros((N_JOINTS, 3, 3))
    frames[0] = np.eye(3)
    for f in range(N_FINGERS):
        F = _triad(_POINTING[f], _CURL[f])
        j = finger_joints(f)
        offsets[j[0]] = _BASE_POS[f]
        for k in range(3):
            offsets[j[k + 1]] = _BONES[f, k] * F[:, 0]
        for jj in j:
            frames[jj] = F
    return offsets, frames


def build_skeleton(shape=None, offsets=None, frames=None):
    """Skeleton with per-finger lengths and pad widths scaled by ``shape``."""
    shape = ShapeParams() if shape is None else shape
    if not isinstance(shape, ShapeParams):
        shape = ShapeParams(shape)
    if offsets is None or frames is None:
        offsets, frames = canonical_offsets()
    offsets = np.array(offsets, dtype=float)
    ls, ws = shape.length_scales(), shape.width_scales()
    anchors = np.zeros((N_FINGERS, 6, 3))
    for f in range(N_FINGERS):
        offsets[finger_joints(f)] *= ls[f]
        anchors[f] = _anchor_template(ws[f])
    return HandSkeleton(_default_parent(), offsets, np.array(frames, dtype=float), anchors,
                        _joint_names())


def load_skeleton_spec(path, shape=None):
    """Read a joint table: ``name parent ox oy oz tx ty tz sx sy sz bx by bz``.

    ``parent`` is a joint name or ``-`` for the root. Joint order and topology
    must match the canonical 21-joint layout.
    """
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append(line.split())
    if len(rows) != N_JOINTS:
        raise InvalidArgument(f"{path}: expected {N_JOINTS} joints, found {len(rows)}")
    names = [r[0] for r in rows]
    offsets = np.zeros((N_JOINTS, 3))
    frames = np.zeros((N_JOINTS, 3, 3))
    expected = _default_parent()
    for j, r in enumerate(rows):
        if len(r) != 14:
            raise InvalidArgument(f"{path}: joint {r[0]} needs 14 fields")
        parent = -1 if r[1] == "-" else names.index(r[1])
        if parent != expected[j]:
            raise InvalidArgument(f"{path}: joint {r[0]} has unexpected parent {r[1]}")
        vals = np.array(r[2:], dtype=float)
        offsets[j] = vals[:3]
        frames[j] = vals[3:].reshape(3, 3).T
        if not np.allclose(frames[j].T @ frames[j], np.eye(3), atol=1e-9):
            raise InvalidArgument(f"{path}: joint {r[0]} triad is not orthonormal")
    skel = build_skeleton(shape, offsets, frames)
    return replace(skel, names=tuple(names))


def dump_skeleton_spec(skeleton, path):
    with open(path, "w") as fh:
        fh.write("# name parent ox oy oz tx ty tz sx sy sz bx by bz\n")
        for j in range(skeleton.joint_count):
            p = skeleton.parent[j]
            parent = "-" if p < 0 else skeleton.names[p]
            vals = list(skeleton.rest_offsets[j]) + list(skeleton.tsb_frames[j].T.reshape(-1))
            fh.write(" ".join([skeleton.names[j], parent] + [repr(float(v)) for v in vals]) + "\n")


# --------------------------------------------------------------------------
# poses
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HandPoseCompact:
    """21 DoF: wrist (6) plus per finger splay, base bend and linked bend."""
    wrist: RigidTransform = field(default_factory=RigidTransform)
    splay: np.ndarray = field(default_factory=lambda: np.zeros(N_FINGERS))
    bend_mcp: np.ndarray = field(default_factory=lambda: np.zeros(N_FINGERS))
    bend_pd: np.ndarray = field(default_factory=lambda: np.zeros(N_FINGERS))

    def finger_vector(self):
        return np.column_stack([self.splay, self.bend_mcp, self.bend_pd]).reshape(-1)

    @classmethod
    def from_finger_vector(cls, wrist, vec):
        v = np.asarray(vec, dtype=float).reshape(N_FINGERS, 3)
        return cls(wrist, v[:, 0].copy(), v[:, 1].copy(), v[:, 2].copy())

    def to_dict(self):
        return {"wrist": self.wrist.to_dict(),
                "fingers": [float(v) for v in self.finger_vector()]}

    @classmethod
    def from_dict(cls, d):
        return cls.from_finger_vector(RigidTransform.from_dict(d["wrist"]), d["fingers"])

    def __eq__(self, other):
        return (isinstance(other, HandPoseCompact) and self.wrist == other.wrist
                and np.array_equal(self.finger_vector(), other.finger_vector()))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class HandPoseExpanded:
    """Per-joint (twist, splay, bend) angles for the 3 rotational joints of each finger."""
    wrist: RigidTransform = field(default_factory=RigidTransform)
    angles: np.ndarray = field(default_factory=lambda: np.zeros((N_FINGERS, 3, 3)))

    def to_dict(self):
        return {"wrist": self.wrist.to_dict(),
                "angles": [float(v) for v in np.asarray(self.angles).reshape(-1)]}

    @classmethod
    def from_dict(cls, d):
        return cls(RigidTransform.from_dict(d["wrist"]),
                   np.array(d["angles"], dtype=float).reshape(N_FINGERS, 3, 3))

    def __eq__(self, other):
        return (isinstance(other, HandPoseExpanded) and self.wrist == other.wrist
                and np.array_equal(self.angles, other.angles))

    __hash__ = None


@dataclass(frozen=True)
class JointLimits:
    """Closed intervals in radians, one row per finger."""
    splay: np.ndarray
    bend_base: np.ndarray
    bend_proximal: np.ndarray
    bend_distal: np.ndarray

    def bend(self, k):
        return (self.bend_base, self.bend_proximal, self.bend_distal)[k]


def default_limits():
    d = np.deg2rad
    splay = np.tile(d([-25.0, 25.0]), (N_FINGERS, 1))
    splay[0] = d([-25.0, 45.0])
    return JointLimits(
        splay=splay,
        bend_base=np.tile(d([-30.0, 90.0]), (N_FINGERS, 1)),
        bend_proximal=np.tile(d([-10.0, 100.0]), (N_FINGERS, 1)),
        bend_distal=np.tile(d([-10.0, 100.0]), (N_FINGERS, 1)),
    )


DEFAULT_LIMITS = default_limits()


def compact_bounds(limits=DEFAULT_LIMITS, coupling=DEFAULT_COUPLING):
    """Per-DoF (lo, hi) for the 15 finger coordinates of a compact pose."""
    lo = np.zeros((N_FINGERS, 3))
    hi = np.zeros((N_FINGERS, 3))
    lo[:, 0], hi[:, 0] = limits.splay[:, 0], limits.splay[:, 1]
    lo[:, 1], hi[:, 1] = limits.bend_base[:, 0], limits.bend_base[:, 1]
    # the linked bend must keep both the proximal and the distal joint in range
    if coupling > 0:
        lo[:, 2] = np.maximum(limits.bend_proximal[:, 0], limits.bend_distal[:, 0] / coupling)
        hi[:, 2] = np.minimum(limits.bend_proximal[:, 1], limits.bend_distal[:, 1] / coupling)
    else:
        lo[:, 2], hi[:, 2] = limits.bend_proximal[:, 0], limits.bend_proximal[:, 1]
    return lo.reshape(-1), hi.reshape(-1)


def expand_pose(pose, coupling=DEFAULT_COUPLING):
    angles = np.zeros((N_FINGERS, 3, 3))
    angles[:, 0, SPLAY] = pose.splay
    angles[:, 0, BEND] = pose.bend_mcp
    angles[:, 1, BEND] = pose.bend_pd
    angles[:, 2, BEND] = coupling * np.asarray(pose.bend_pd)
    return HandPoseExpanded(pose.wrist, angles)


@dataclass
class ValidityReport:
    twist_ok: bool = True
    splay_ok: bool = True
    limits_ok: bool = True
    linked: bool = True
    violations: list = field(default_factory=list)

    @property
    def valid(self):
        return self.twist_ok and self.splay_ok and self.limits_ok


def validate_pose(pose, limits=DEFAULT_LIMITS, coupling=DEFAULT_COUPLING, tol=1e-12):
    """Check the joint protocols and limits; never raises.

    Twist anywhere or splay off the base joints violates the first protocol.
    Independent proximal/distal bends are accepted (disturbed poses relax the
    linkage), and fingers are never checked against each other; ``linked``
    only reports whether the linkage still holds.
    """
    rep = ValidityReport()
    a = np.asarray(pose.angles, dtype=float)
    if a.shape != (N_FINGERS, 3, 3) or not np.all(np.isfinite(a)):
        rep.twist_ok = rep.splay_ok = rep.limits_ok = False
        rep.violations.append("malformed angles")
        return rep
    for f in range(N_FINGERS):
        name = FINGER_NAMES[f]
        for k in range(3):
            if a[f, k, TWIST] != 0.0:
                rep.twist_ok = False
                rep.violations.append(f"twist at {name} {JOINT_SUFFIX[k]}")
        for k in (1, 2):
            if a[f, k, SPLAY] != 0.0:
                rep.splay_ok = False
                rep.violations.append(f"splay at non-base joint {name} {JOINT_SUFFIX[k]}")
        checks = [("splay", a[f, 0, SPLAY], limits.splay[f])]
        checks += [(f"bend {JOINT_SUFFIX[k]}", a[f, k, BEND], limits.bend(k)[f]) for k in range(3)]
        for label, v, (lo, hi) in checks:
            if v < lo - tol or v > hi + tol:
                rep.limits_ok = False
                rep.violations.append(f"{name} {label} {np.rad2deg(v):.2f} deg out of range")
        if abs(a[f, 2, BEND] - coupling * a[f, 1, BEND]) > 1e-12:
            rep.linked = False
    return rep


# --------------------------------------------------------------------------
# kinematics
# --------------------------------------------------------------------------

def _local_fk(skeleton, angles):
    """Positions and accumulated rotations in the wrist frame.

    Returns ``pos`` (21, 3) and ``G`` (21, 3, 3), ``G[j]`` being the rotation
    carried to joint j's children.
    """
    return kernels.local_fk(np.ascontiguousarray(skeleton.rest_offsets, dtype=np.float64),
                            np.ascontiguousarray(skeleton.tsb_frames, dtype=np.float64),
                            np.ascontiguousarray(angles, dtype=np.float64))


def forward_kinematics(skeleton, pose, limits=DEFAULT_LIMITS, check=True):
    """World positions of the 21 joints."""
    if check:
        rep = validate_pose(pose, limits)
        if not rep.valid:
            raise InvalidArgument("invalid pose: " + "; ".join(rep.violations))
    pos, _ = _local_fk(skeleton, np.asarray(pose.angles, dtype=float))
    return pose.wrist.apply(pos)


def anchor_positions(skeleton, pose):
    """World positions of the fingertip anchors, shape (5, 6, 3)."""
    pos, G = _local_fk(skeleton, np.asarray(pose.angles, dtype=float))
    out = np.zeros((N_FINGERS, 6, 3))
    for f in range(N_FINGERS):
        tip = finger_joints(f)[3]
        local = skeleton.anchor_points[f] @ skeleton.tsb_frames[tip].T
        out[f] = pos[tip] + local @ G[tip].T
    return pose.wrist.apply(out.reshape(-1, 3)).reshape(N_FINGERS, 6, 3)


def compact_kinematics(skeleton, pose, coupling=DEFAULT_COUPLING):
    """Anchors of a compact pose and their Jacobian w.r.t. the 21 DoFs.

    DoF order: wrist rotation increment (3, left-multiplied), wrist
    translation (3), then (splay, base bend, linked bend) per finger.
    Returns ``anchors`` (5, 6, 3), ``jac`` (5, 6, 3, 21) and joint positions.
    """
    if kernels.USE_NUMBA:
        f64 = lambda x: np.ascontiguousarray(x, dtype=np.float64)
        return kernels.compact_chain_nb(
            f64(skeleton.rest_offsets), f64(skeleton.tsb_frames), f64(skeleton.anchor_points),
            f64(pose.splay), f64(pose.bend_mcp), f64(pose.bend_pd),
            f64(pose.wrist.rotation), f64(pose.wrist.translation), float(coupling))
    return compact_kinematics_np(skeleton, pose, coupling)


def compact_kinematics_np(skeleton, pose, coupling=DEFAULT_COUPLING):
    exp_pose = expand_pose(pose, coupling)
    a = exp_pose.angles
    R, t = pose.wrist.rotation, pose.wrist.translation
    pos, G = _local_fk(skeleton, a)
    frames = skeleton.tsb_frames
    anchors = np.zeros((N_FINGERS, 6, 3))
    jac = np.zeros((N_FINGERS, 6, 3, 21))
    world_pos = pos @ R.T + t
    for f in range(N_FINGERS):
        j = finger_joints(f)
        tip = j[3]
        local = pos[tip] + (skeleton.anchor_points[f] @ frames[tip].T) @ G[tip].T
        w = local @ R.T + t
        anchors[f] = w
        rel = w - t
        for i in range(6):
            jac[f, i, :, 0:3] = -skew(rel[i])
        jac[f, :, :, 3:6] = np.eye(3)
        # splay about the rest splay axis; base bend about the splayed bend axis
        Fb = frames[j[0]]
        ax_splay = R @ Fb[:, SPLAY]
        ax_bend0 = R @ (axis_angle(Fb[:, SPLAY], a[f, 0, SPLAY]) @ Fb[:, BEND]) \
            if a[f, 0, SPLAY] else R @ Fb[:, BEND]
        ax_bend1 = R @ (G[j[0]] @ frames[j[1]][:, BEND])
        ax_bend2 = R @ (G[j[1]] @ frames[j[2]][:, BEND])
        c = 6 + 3 * f
        jac[f, :, :, c] = np.cross(ax_splay, w - world_pos[j[0]])
        jac[f, :, :, c + 1] = np.cross(ax_bend0, w - world_pos[j[0]])
        jac[f, :, :, c + 2] = (np.cross(ax_bend1, w - world_pos[j[1]])
                               + coupling * np.cross(ax_bend2, w - world_pos[j[2]]))
    return anchors, jac, world_pos


# --------------------------------------------------------------------------
# disturbances
# --------------------------------------------------------------------------

def clamp_expanded(angles, limits=DEFAULT_LIMITS):
    a = np.array(angles, dtype=float)
    a[:, 0, SPLAY] = np.clip(a[:, 0, SPLAY], limits.splay[:, 0], limits.splay[:, 1])
    for k in range(3):
        lim = limits.bend(k)
        a[:, k, BEND] = np.clip(a[:, k, BEND], lim[:, 0], lim[:, 1])
    return a


def disturb_pose(pose, sigma_bend, sigma_splay, rng, limits=DEFAULT_LIMITS,
                 coupling=DEFAULT_COUPLING):
    """Expand, then jitter all 15 bends and the 5 base splays independently.

    The proximal/distal linkage is dropped for the noise; twist stays zero and
    splay stays on the base joints. Results are clamped to the limits.
    """
    if sigma_bend < 0 or sigma_splay < 0:
        raise InvalidArgument("sigmas must be >= 0")
    base = expand_pose(pose, coupling)
    a = np.array(base.angles)
    bend_noise = rng.normal(0.0, 1.0, size=(N_FINGERS, 3)) * sigma_bend
    splay_noise = rng.normal(0.0, 1.0, size=N_FINGERS) * sigma_splay
    a[:, :, BEND] += bend_noise
    a[:, 0, SPLAY] += splay_noise
    return HandPoseExpanded(pose.wrist, clamp_expanded(a, limits))


def sample_shape(rng, sigma=SHAPE_SIGMA, clamp=SHAPE_CLAMP):
    """Ten independent N(0, sigma^2) coefficients clipped to [-clamp, clamp].

    ``sigma`` is a standard deviation.
    """
    return ShapeParams(np.clip(rng.normal(0.0, sigma, size=SHAPE_DIM), -clamp, clamp))


def random_compact_pose(rng, limits=DEFAULT_LIMITS, coupling=DEFAULT_COUPLING, wrist=None):
    lo, hi = compact_bounds(limits, coupling)
    vec = rng.uniform(lo, hi)
    return HandPoseCompact.from_finger_vector(wrist or RigidTransform(), vec)
