"""Training losses and evaluation metrics for hand and object poses.

Units are mixed on purpose: the location, corner and symmetry losses are
mean squared distances (m^2) while the ordinal loss sums absolute projected
distances (m). The weighted total adds them as they are.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .rigid import so3_exp

N_HAND = 21
N_CORNERS = 8
ORD_DEAD_ZONE = 1e-3


@dataclass(eq=False)
class PosePrediction:
    hand_joints: np.ndarray       # (21, 3), camera frame
    object_centroid: np.ndarray   # (3,)
    object_rotation: np.ndarray   # (3,), axis-angle

    def __post_init__(self):
        self.hand_joints = np.asarray(self.hand_joints, dtype=float).reshape(N_HAND, 3)
        self.object_centroid = np.asarray(self.object_centroid, dtype=float).reshape(3)
        self.object_rotation = np.asarray(self.object_rotation, dtype=float).reshape(3)
        for a in (self.hand_joints, self.object_centroid, self.object_rotation):
            if not np.all(np.isfinite(a)):
                raise InvalidArgument("pose prediction has non-finite coordinates")

    def points22(self):
        return np.vstack([self.hand_joints, self.object_centroid])

    def corners(self, corners_canonical):
        return _points(corners_canonical, N_CORNERS) @ so3_exp(self.object_rotation).T \
            + self.object_centroid

    def to_dict(self):
        return {"hand_joints": self.hand_joints.tolist(),
                "object_centroid": self.object_centroid.tolist(),
                "object_rotation": self.object_rotation.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["hand_joints"], d["object_centroid"], d["object_rotation"])


@dataclass(frozen=True)
class LossBundle:
    loc: float
    cor: float
    ord: float
    sym: float
    total: float


def _points(x, n=None, name="points"):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3:
        raise InvalidArgument(f"{name} must be a list of 3-vectors")
    if n is not None and len(a) != n:
        raise InvalidArgument(f"{name}: expected {n} points, got {len(a)}")
    return a


def _pair(pred, gt, n, name):
    p, g = _points(pred, n, name), _points(gt, n, name)
    if p.shape != g.shape:
        raise InvalidArgument(f"{name}: length mismatch {len(p)} vs {len(g)}")
    return p, g


def _rotations(sym):
    S = np.asarray(getattr(sym, "rotations", sym), dtype=float)
    if S.size == 0:
        raise InvalidArgument("symmetry set is empty")
    return S.reshape(-1, 3, 3)


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def loss_loc(pred, gt):
    """Mean squared distance over the 21 hand joints plus the object centroid."""
    p, g = _pair(pred, gt, N_HAND + 1, "loss_loc")
    return float(np.mean(np.sum((p - g) ** 2, axis=1)))


def loss_cor(r_o, corners_canonical, corners_gt):
    """Mean squared distance between rotated canonical corners and the targets."""
    c, g = _pair(corners_canonical, corners_gt, N_CORNERS, "loss_cor")
    d = c @ so3_exp(r_o).T - g
    return float(np.mean(np.sum(d * d, axis=1)))


def depth_relations(hand, corners, view_dir, dead_zone=ORD_DEAD_ZONE):
    """Signs of (p_i - c_j) . n for every joint/corner pair, shape (21, 8).

    Pairs whose projected depth gap is within ``dead_zone`` get 0 and are
    never penalised.
    """
    h, c = _points(hand, N_HAND, "hand"), _points(corners, N_CORNERS, "corners")
    d = (h[:, None, :] - c[None, :, :]) @ np.asarray(view_dir, dtype=float)
    s = np.sign(d)
    s[np.abs(d) <= dead_zone] = 0.0
    return s


def loss_ord(hand, corners, gt_relations, view_dir):
    """Sum of |projected depth gap| over pairs whose depth order disagrees with gt."""
    n = np.asarray(view_dir, dtype=float)
    if not abs(np.linalg.norm(n) - 1.0) <= 1e-9:
        raise InvalidArgument("view_dir must be a unit vector")
    h, c = _points(hand, N_HAND, "hand"), _points(corners, N_CORNERS, "corners")
    rel = np.asarray(gt_relations, dtype=float)
    if rel.shape != (N_HAND, N_CORNERS):
        raise InvalidArgument("gt_relations must have shape (21, 8)")
    d = (h[:, None, :] - c[None, :, :]) @ n
    bad = (rel != 0) & (np.sign(d) != rel)
    return float(np.abs(d[bad]).sum())


def loss_sym(r_pred, r_gt, sym, corners_canonical):
    """Corner loss against the closest symmetric counterpart of the target."""
    S = _rotations(sym)
    c = _points(corners_canonical, N_CORNERS, "corners")
    pred = c @ so3_exp(r_pred).T
    Rg = so3_exp(r_gt)
    tgt = c @ np.transpose(Rg @ S, (0, 2, 1))
    d = pred[None] - tgt
    return float(np.min(np.mean(np.sum(d * d, axis=2), axis=1)))


def combine(loc, cor, ord_, sym, lambdas):
    l1, l2, l3 = (float(v) for v in lambdas)
    if not all(np.isfinite([l1, l2, l3])):
        raise InvalidArgument("loss weights must be finite")
    return LossBundle(loc, cor, ord_, sym, loc + l1 * cor + l2 * ord_ + l3 * sym)


def loss_total(pred, gt, corners_canonical, lambdas=(1.0, 1.0, 0.0), view_dir=(0.0, 0.0, 1.0),
               sym=None, dead_zone=ORD_DEAD_ZONE):
    """All four terms for a prediction/target pair and their weighted sum.

    ``view_dir`` defaults to the camera optical axis. The symmetry term is
    evaluated against ``sym`` (identity only when omitted).
    """
    c = _points(corners_canonical, N_CORNERS, "corners")
    loc = loss_loc(pred.points22(), gt.points22())
    gt_corners = gt.corners(c)
    cor = loss_cor(pred.object_rotation, c, c @ so3_exp(gt.object_rotation).T)
    rel = depth_relations(gt.hand_joints, gt_corners, view_dir, dead_zone)
    ord_ = loss_ord(pred.hand_joints, pred.corners(c), rel, view_dir)
    S = np.eye(3)[None] if sym is None else sym
    symv = loss_sym(pred.object_rotation, gt.object_rotation, S, c)
    return combine(loc, cor, ord_, symv, lambdas)


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

def mpjpe(pred_hand, gt_hand):
    """Mean joint distance after moving both wrists (joint 0) to the origin."""
    p, g = _pair(pred_hand, gt_hand, N_HAND, "mpjpe")
    return float(np.mean(np.linalg.norm((p - p[0]) - (g - g[0]), axis=1)))


def mpcpe(pred_corners, gt_corners):
    p, g = _pair(pred_corners, gt_corners, N_CORNERS, "mpcpe")
    return float(np.mean(np.linalg.norm(p - g, axis=1)))


def mssd(pred, gt, sym, vertices):
    """Min over symmetries of the max vertex distance between the two poses."""
    V = _points(vertices, name="vertices")
    if len(V) == 0:
        raise InvalidArgument("vertices must be nonempty")
    S = _rotations(sym)
    Rp, tp = pred.rotation, pred.translation
    Rg, tg = gt.rotation, gt.translation
    vp = V @ Rp.T + tp
    best = np.inf
    for R in S:
        vg = V @ (Rg @ R).T + tg
        best = min(best, float(np.max(np.linalg.norm(vp - vg, axis=1))))
    return best
