"""Rotational symmetry sets of rigid objects.

A set is built in the object's principal-axis frame from a list of
(axis, angle) generators, closed under composition, and each element is
snapped onto the actual vertex cloud with rotation-only ICP. Elements that
do not map the cloud onto itself within tolerance are dropped.

All rotations act about the vertex centroid.
"""
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import AlignmentError, FormatError, InvalidArgument
from .rigid import RigidTransform, axis_angle, rotation_angle

AXES = {"x": np.array([1.0, 0.0, 0.0]), "y": np.array([0.0, 1.0, 0.0]),
        "z": np.array([0.0, 0.0, 1.0])}
REVOLUTION = math.inf
DEFAULT_STEPS = 36
DEFAULT_TOL = 1e-3       # times the object diameter
MAX_GROUP = 4096


@dataclass(frozen=True, eq=False)
class SymmetryEntry:
    axis: str
    angle: float    # radians, or REVOLUTION

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidArgument(f"unknown symmetry axis {self.axis!r}")
        if self.angle != REVOLUTION:
            if not self.angle > 0:
                raise InvalidArgument("symmetry angle must be positive")
            k = 2.0 * math.pi / self.angle
            if abs(k - round(k)) > 1e-9:
                raise InvalidArgument(f"angle {self.angle} does not divide 2*pi")

    def __eq__(self, other):
        return isinstance(other, SymmetryEntry) and (self.axis, self.angle) == (other.axis, other.angle)

    def __hash__(self):
        return hash((self.axis, self.angle))


@dataclass(frozen=True)
class SymmetrySpec:
    entries: tuple = ()


@dataclass
class SymmetrySet:
    rotations: np.ndarray                  # (k, 3, 3), identity first
    residuals: np.ndarray = None           # symmetric Hausdorff per element (m)
    dropped: list = field(default_factory=list)
    object_id: str = ""

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=float).reshape(-1, 3, 3)
        if self.residuals is None:
            self.residuals = np.zeros(len(self.rotations))

    def __len__(self):
        return len(self.rotations)

    def __eq__(self, other):
        return (isinstance(other, SymmetrySet) and self.object_id == other.object_id
                and np.array_equal(self.rotations, other.rotations)
                and np.array_equal(self.residuals, other.residuals))


# --------------------------------------------------------------------------
# spec tables
# --------------------------------------------------------------------------

def _parse_angle(tok):
    t = tok.strip().lower().replace("°", "").replace("deg", "")
    if t in ("inf", "infinity", "∞"):
        return REVOLUTION
    return math.radians(float(t))


def parse_symmetry_row(line):
    """``object_id  x,y,z  180,180,inf`` (columns split on whitespace or '|')."""
    cols = [c for c in re.split(r"\s*\|\s*|\s+", line.strip()) if c]
    if len(cols) != 3:
        raise FormatError(f"expected 3 columns (id, axes, angles): {line!r}")
    oid, axes, angles = cols
    axes = [a.strip().lower() for a in axes.split(",") if a.strip()]
    angles = [a for a in angles.split(",") if a.strip()]
    if len(axes) != len(angles):
        raise FormatError(f"{oid}: {len(axes)} axes but {len(angles)} angles")
    try:
        entries = tuple(SymmetryEntry(a, _parse_angle(g)) for a, g in zip(axes, angles))
    except ValueError as exc:
        raise FormatError(f"{oid}: {exc}") from exc
    return oid, SymmetrySpec(entries)


def load_symmetry_table(path):
    """Read a symmetry table; '#' starts a comment. Returns {object_id: spec}."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0]
            if line.strip():
                oid, spec = parse_symmetry_row(line)
                out[oid] = spec
    return out


def format_symmetry_row(object_id, spec):
    def ang(a):
        return "inf" if a == REVOLUTION else repr(math.degrees(a))
    return "%s %s %s" % (object_id, ",".join(e.axis for e in spec.entries),
                         ",".join(ang(e.angle) for e in spec.entries))


def save_symmetry_set(path, sset):
    doc = {"object_id": sset.object_id,
           "rotations": [R.tolist() for R in sset.rotations],
           "residuals": [float(r) for r in sset.residuals]}
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_symmetry_set(path):
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return SymmetrySet(np.array(doc["rotations"], dtype=float),
                           np.array(doc["residuals"], dtype=float), [], doc.get("object_id", ""))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed symmetry set") from exc


# --------------------------------------------------------------------------
# alignment and ICP
# --------------------------------------------------------------------------

def _orient(v):
    i = int(np.argmax(np.abs(v) > np.abs(v).max() - 1e-12))  # lowest index among ties
    return -v if v[i] < 0 else v


def principal_axis_align(vertices, rel_tol=1e-9):
    """Rigid transform taking the cloud to its principal-axis frame.

    Centroid to the origin, inertia eigenvectors to x/y/z with eigenvalues
    descending. Inside a degenerate eigenspace the basis is taken from the
    canonical axes projected onto it. The first two axes are flipped so their
    largest-magnitude component is positive; the third completes a
    right-handed frame.
    """
    V = np.asarray(getattr(vertices, "vertices", vertices), dtype=float)
    if V.ndim != 2 or V.shape[1] != 3 or len(V) < 4:
        raise AlignmentError("need at least 4 three-dimensional points")
    c = V.mean(axis=0)
    X = V - c
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1e-300):
        raise AlignmentError("degenerate (coplanar) point cloud")
    I = np.eye(3) * np.sum(X * X) - X.T @ X
    w, E = np.linalg.eigh(I)
    w, E = w[::-1], E[:, ::-1]
    scale = max(abs(w[0]), 1e-300)
    axes = []
    k = 0
    while k < 3:
        g = [k]
        while g[-1] + 1 < 3 and abs(w[g[-1] + 1] - w[k]) <= rel_tol * scale:
            g.append(g[-1] + 1)
        if len(g) == 1:
            axes.append(E[:, k])
        else:
            P = E[:, g] @ E[:, g].T
            basis = []
            for e in np.eye(3):
                u = P @ e
                for b in basis:
                    u = u - (u @ b) * b
                if np.linalg.norm(u) > 1e-6:
                    basis.append(u / np.linalg.norm(u))
                if len(basis) == len(g):
                    break
            axes.extend(basis)
        k = g[-1] + 1
    a0, a1 = _orient(axes[0]), _orient(axes[1])
    a1 = a1 - (a1 @ a0) * a0
    a1 /= np.linalg.norm(a1)
    R = np.vstack([a0, a1, np.cross(a0, a1)])
    return RigidTransform.from_matrix(R, -R @ c)


def _kabsch(X, Y):
    """Rotation R minimising sum ||R x_i - y_i||^2."""
    H = X.T @ Y
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    return Vt.T @ np.diag([1.0, 1.0, d]) @ U.T


def icp_refine(vertices, r_def, iters=50, tol=1e-10, tree=None):
    """Rotation-only ICP: the dR minimising ||dR R_def V - V|| over correspondences.

    ``vertices`` should be centred on the rotation centre. Returns
    (dR, initial cost, final cost) with cost the mean squared NN distance.
    """
    V = np.asarray(vertices, dtype=float)
    if len(V) < 3:
        raise InvalidArgument("icp needs at least 3 points")
    tree = tree or cKDTree(V)
    X = V @ np.asarray(r_def, dtype=float).T
    dR = np.eye(3)
    d, idx = tree.query(X)
    cost0 = cost = float(np.mean(d * d))
    best = (dR, cost)
    for _ in range(iters):
        cand = _kabsch(X, V[idx])
        d, idx_new = tree.query(X @ cand.T)
        new = float(np.mean(d * d))
        if new < best[1]:
            best = (cand, new)
        if cost - new < tol:
            break
        dR, cost, idx = cand, new, idx_new
    return best[0], cost0, best[1]


def hausdorff(A, B, tree_a=None, tree_b=None):
    tree_a = tree_a or cKDTree(A)
    tree_b = tree_b or cKDTree(B)
    return float(max(tree_b.query(A)[0].max(), tree_a.query(B)[0].max()))


# --------------------------------------------------------------------------
# group generation
# --------------------------------------------------------------------------

def generators(spec, revolution_steps=DEFAULT_STEPS):
    out = []
    for e in spec.entries:
        ang = 2.0 * math.pi / revolution_steps if e.angle == REVOLUTION else e.angle
        out.append(axis_angle(AXES[e.axis], ang))
    return out


def close_group(gens, atol=1e-8, max_size=MAX_GROUP):
    """All products of the generators, identity first, deduplicated."""
    elems = [np.eye(3)]
    frontier = [np.eye(3)]
    while frontier:
        nxt = []
        for A in frontier:
            for G in gens:
                C = G @ A
                if not any(np.abs(C - E).max() <= atol for E in elems):
                    elems.append(C)
                    nxt.append(C)
                    if len(elems) > max_size:
                        raise InvalidArgument("symmetry group does not close")
        frontier = nxt
    return elems


def symmetry_set(obj, spec, revolution_steps=DEFAULT_STEPS, icp_iters=50, tol=DEFAULT_TOL):
    """Refined, verified symmetry rotations expressed in the object's own frame."""
    align = principal_axis_align(obj.vertices)
    A = align.rotation
    Va = align.apply(obj.vertices)
    tree = cKDTree(Va)
    limit = tol * obj.diameter
    rotations, residuals, dropped = [np.eye(3)], [0.0], []
    for R_def in close_group(generators(spec, revolution_steps))[1:]:
        dR, _, _ = icp_refine(Va, R_def, icp_iters, tree=tree)
        R = dR @ R_def
        U, _, Vt = np.linalg.svd(R)
        R = U @ Vt
        res = hausdorff(Va @ R.T, Va, tree_b=tree)
        if res > limit:
            dropped.append({"angle": rotation_angle(R_def), "residual": res,
                            "reason": "self-map residual above tolerance"})
            continue
        rotations.append(A.T @ R @ A)
        residuals.append(res)
    return SymmetrySet(np.array(rotations), np.array(residuals), dropped, obj.id)


def check_symmetry_set(obj, sset, tol=DEFAULT_TOL):
    """Post-hoc audit: per-element self-map residual of the centred cloud."""
    V = obj.vertices - obj.vertices.mean(axis=0)
    tree = cKDTree(V)
    res = np.array([hausdorff(V @ R.T, V, tree_b=tree) for R in sset.rotations])
    return res, bool(np.all(res <= tol * obj.diameter))
