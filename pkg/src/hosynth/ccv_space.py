"""Discrete object x pose x viewpoint space with loss-driven sampling weights."""
import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import FormatError, InvalidArgument
from .viewpoints import sphere_grid

LOWER_BOUND = 0.1
UPPER_BOUND = 2.0

SNAPSHOT_MAGIC = b"CCVW"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sBQQQ")


class TripletIndex(NamedTuple):
    object_id: int
    pose_id: int
    viewpoint_id: int


@dataclass
class WeightMap:
    dims: tuple
    weights: np.ndarray
    lower_bound: float = LOWER_BOUND
    upper_bound: float = UPPER_BOUND

    @classmethod
    def uniform(cls, dims, **kw):
        dims = tuple(int(d) for d in dims)
        return cls(dims, np.ones(dims), **kw)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(self.dims)

    @property
    def size(self):
        return int(np.prod(self.dims))

    def flat_index(self, idx):
        check_index(idx, self.dims)
        return int(np.ravel_multi_index(tuple(idx), self.dims))

    def triplet(self, flat):
        return TripletIndex(*(int(i) for i in np.unravel_index(flat, self.dims)))

    def copy(self):
        return WeightMap(self.dims, self.weights.copy(), self.lower_bound, self.upper_bound)


@dataclass
class CCVSpace:
    n_objects: int
    n_poses: int
    n_viewpoints: int
    viewpoint_table: list
    weights: WeightMap
    grid: tuple = (1, 1)
    # pose_table[o][p] -> GraspCandidate; None for an abstract space
    pose_table: list = None
    object_ids: list = field(default_factory=list)

    @property
    def dims(self):
        return (self.n_objects, self.n_poses, self.n_viewpoints)

    @property
    def size(self):
        return self.n_objects * self.n_poses * self.n_viewpoints

    def grasp(self, idx):
        check_index(idx, self.dims)
        if self.pose_table is None:
            raise InvalidArgument("space has no pose table attached")
        return self.pose_table[idx[0]][idx[1]]

    def viewpoint(self, idx):
        check_index(idx, self.dims)
        return self.viewpoint_table[idx[2]]


@dataclass(frozen=True)
class FeedbackRecord:
    triplet: TripletIndex
    error: float


def check_index(idx, dims):
    if len(idx) != 3:
        raise InvalidArgument(f"triplet must have 3 components, got {idx!r}")
    for i, n in zip(idx, dims):
        if not 0 <= int(i) < n:
            raise InvalidArgument(f"triplet {tuple(idx)} out of bounds for dims {dims}")


def build_space(n_objects, poses_per_object, viewpoint_grid, pose_table=None,
                object_ids=None):
    n_u, n_phi = viewpoint_grid
    if min(n_objects, poses_per_object, n_u, n_phi) < 1:
        raise InvalidArgument("all space dimensions must be >= 1")
    if pose_table is not None:
        if len(pose_table) != n_objects or any(len(r) != poses_per_object for r in pose_table):
            raise InvalidArgument("pose table does not match the space dimensions")
    views = sphere_grid(n_u, n_phi)
    dims = (n_objects, poses_per_object, n_u * n_phi)
    return CCVSpace(n_objects, poses_per_object, n_u * n_phi, views,
                    WeightMap.uniform(dims), (n_u, n_phi), pose_table,
                    list(object_ids or []))


def probability_of(wmap, idx):
    flat = wmap.flat_index(idx)
    return float(wmap.weights.reshape(-1)[flat] / wmap.weights.sum())


def probabilities(wmap):
    return wmap.weights / wmap.weights.sum()


def sample_triplets(wmap, n, rng):
    """Draw ``n`` distinct triplets, removing each one from the pool after it is drawn.

    Each draw is taken from the multinomial over the remaining weights; a sum
    tree keeps a draw at O(log N).
    """
    if n < 0 or n > wmap.size:
        raise InvalidArgument(f"cannot draw {n} triplets from a pool of {wmap.size}")
    flat = wmap.weights.ravel()
    if np.any(flat < 0) or not np.all(np.isfinite(flat)):
        raise InvalidArgument("weights must be finite and nonnegative")
    cap = kernels.tree_capacity(flat.size)
    tree = kernels.build_tree(flat)
    picks = kernels.tree_draw(tree, cap, rng.random(n))
    if n and picks[-1] < 0:
        raise InvalidArgument(
            f"only {int(np.count_nonzero(flat))} triplets have positive weight, {n} requested")
    return [wmap.triplet(int(i)) for i in picks]


def weight_update(error, e_min, e_max):
    """Multiplicative factor ``1 / (q + 0.5)`` with ``q = (e_max - e) / (e_max - e_min)``.

    Ranges from 2/3 for the easiest sample of the epoch to 2 for the hardest.
    """
    if e_max < e_min:
        raise InvalidArgument(f"e_max ({e_max}) < e_min ({e_min})")
    if e_max == e_min:
        return 1.0
    q = (e_max - error) / (e_max - e_min)
    return 1.0 / (q + 0.5)


def apply_epoch_feedback(wmap, records):
    """Return a new map with every referenced weight scaled and clamped."""
    if not records:
        raise InvalidArgument("feedback records must be nonempty")
    flat_ids = np.array([wmap.flat_index(r.triplet) for r in records])
    if len(np.unique(flat_ids)) != len(flat_ids):
        raise InvalidArgument("duplicate triplet in epoch feedback")
    errors = np.array([r.error for r in records], dtype=float)
    if not np.all(np.isfinite(errors)) or np.any(errors < 0):
        raise InvalidArgument("feedback errors must be finite and nonnegative")
    e_min, e_max = float(errors.min()), float(errors.max())
    out = wmap.copy()
    flat = out.weights.reshape(-1)
    for fid, e in zip(flat_ids, errors):
        w = flat[fid] * weight_update(e, e_min, e_max)
        flat[fid] = min(out.upper_bound, max(out.lower_bound, w))
    return out


def save_weights(path, wmap):
    """Binary snapshot: magic, version byte, three little-endian u64 dims, f64 weights."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, *wmap.dims))
        fh.write(np.ascontiguousarray(wmap.weights, dtype="<f8").tobytes())


def load_weights(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, *dims = _HEADER.unpack_from(blob)
    if magic != SNAPSHOT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n = int(np.prod(dims))
    body = blob[_HEADER.size:]
    if len(body) != 8 * n:
        raise FormatError(f"{path}: expected {8 * n} payload bytes, found {len(body)}")
    w = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(dims)
    return WeightMap(tuple(dims), w)
