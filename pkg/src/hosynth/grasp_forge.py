"""Contact-guided grasp synthesis.

Pipeline per attempt: wrist site on the dilated surface -> pre-grasp
template -> contact-feasible region -> fingertip/contact pairing -> contact
cost fit over the 21 hand DoFs -> validity filter.
"""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import hand_model as hm
from .errors import (FormatError, GenerationError, InvalidArgument, MeshError, PairingError,
                     RegionError)
from .rigid import RigidTransform, quat_to_matrix, rotation_between, so3_exp

PALM_NORMAL = np.array([0.0, 0.0, 1.0])
TEMPLATE_BEND_MCP = math.radians(20.0)
TEMPLATE_BEND_PD = math.radians(25.0)
TEMPLATE_THUMB_SPLAY = math.radians(30.0)


@dataclass
class GraspConfig:
    offset: float = 0.08
    n_sites: int = 64
    w_rep: float = 10.0
    eps_contact: float = 0.002
    tau_pen: float = 0.002
    max_iters: int = 200
    gtol: float = 1e-6
    # stationarity by stall: relative cost drop over ``stall_window`` steps
    ftol: float = 2e-2
    stall_window: int = 10
    budget_factor: int = 3
    residual_cap: float = 2.5e-3
    pairing_retries: int = 8
    coupling: float = hm.DEFAULT_COUPLING
    limits: hm.JointLimits = field(default_factory=hm.default_limits)
    threads: int = 1


@dataclass(frozen=True, eq=False)
class WristSite:
    position: np.ndarray
    approach: np.ndarray
    nearest_vertex: np.ndarray
    vertex_index: int = -1


@dataclass(frozen=True, eq=False)
class ContactAssignment:
    finger_id: int
    fingertip_point: np.ndarray
    contact_vertex: np.ndarray
    min_radius: float
    vertex_index: int = -1

    def to_dict(self):
        return {"finger_id": int(self.finger_id),
                "fingertip_point": [float(v) for v in self.fingertip_point],
                "contact_vertex": [float(v) for v in self.contact_vertex],
                "min_radius": float(self.min_radius),
                "vertex_index": int(self.vertex_index)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["finger_id"]), np.array(d["fingertip_point"], dtype=float),
                   np.array(d["contact_vertex"], dtype=float), float(d["min_radius"]),
                   int(d["vertex_index"]))

    def __eq__(self, other):
        return (isinstance(other, ContactAssignment) and self.finger_id == other.finger_id
                and np.array_equal(self.fingertip_point, other.fingertip_point)
                and np.array_equal(self.contact_vertex, other.contact_vertex)
                and self.min_radius == other.min_radius
                and self.vertex_index == other.vertex_index)

    __hash__ = None


@dataclass(eq=False)
class GraspCandidate:
    object_id: str
    pose: hm.HandPoseCompact
    assignments: list
    max_penetration: float = 0.0
    contact_distance: dict = field(default_factory=dict)   # finger id -> meters
    residual: float = 0.0
    converged: bool = True
    iterations: int = 0
    site_index: int = -1
    cost_history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "object_id": self.object_id,
            "pose": self.pose.to_dict(),
            "assignments": [a.to_dict() for a in self.assignments],
            "diagnostics": {
                "max_penetration": float(self.max_penetration),
                "contact_distance": {str(k): float(v) for k, v in sorted(self.contact_distance.items())},
                "residual": float(self.residual),
                "converged": bool(self.converged),
                "iterations": int(self.iterations),
                "site_index": int(self.site_index),
            },
        }

    @classmethod
    def from_dict(cls, d):
        diag = d["diagnostics"]
        return cls(d["object_id"], hm.HandPoseCompact.from_dict(d["pose"]),
                   [ContactAssignment.from_dict(a) for a in d["assignments"]],
                   float(diag["max_penetration"]),
                   {int(k): float(v) for k, v in diag["contact_distance"].items()},
                   float(diag["residual"]), bool(diag["converged"]), int(diag["iterations"]),
                   int(diag["site_index"]))

    def __eq__(self, other):
        return isinstance(other, GraspCandidate) and self.to_dict() == other.to_dict()

    __hash__ = None


# --------------------------------------------------------------------------
# step 1: sites and pre-grasp
# --------------------------------------------------------------------------

def offset_surface_sites(obj, offset, n_sites, rng, max_rounds=50):
    """Wrist sites at Euclidean distance ``offset`` from the surface.

    Area-uniform surface samples are pushed out along their face normal; a
    sample is kept only if its true distance to the mesh equals ``offset``
    (this drops samples whose offset point is captured by another part of a
    non-convex surface).
    """
    if not offset > 0:
        raise InvalidArgument("offset must be positive")
    if n_sites < 1:
        raise InvalidArgument("n_sites must be >= 1")
    tol = 1e-9 + 1e-9 * offset
    kept = []
    for _ in range(max_rounds):
        need = n_sites - len(kept)
        if need <= 0:
            break
        pts, tri = obj.sample_surface(2 * need, rng)
        cand = pts + offset * obj.face_normals[tri]
        d, _, _ = obj.closest(cand)
        ok = np.abs(d - offset) <= tol
        kept.extend(cand[ok][:need])
    if len(kept) < n_sites:
        raise MeshError(f"{obj.id}: could only place {len(kept)} of {n_sites} offset sites")
    pos = np.array(kept)
    _, vid = obj.nearest_vertex(pos)
    sites = []
    for p, i in zip(pos, vid):
        v = obj.vertices[i]
        a = v - p
        sites.append(WristSite(p, a / np.linalg.norm(a), v.copy(), int(i)))
    return sites


def pregrasp_pose(site):
    """Half-closed prehensile template with the palm facing the object."""
    R = rotation_between(PALM_NORMAL, site.approach)
    wrist = RigidTransform.from_matrix(R, site.position)
    splay = np.zeros(hm.N_FINGERS)
    splay[0] = TEMPLATE_THUMB_SPLAY
    return hm.HandPoseCompact(wrist, splay, np.full(hm.N_FINGERS, TEMPLATE_BEND_MCP),
                              np.full(hm.N_FINGERS, TEMPLATE_BEND_PD))


def contact_feasible_region(site, obj, skeleton):
    """Indices of vertices within the hand's full reach of the wrist site."""
    reach = skeleton.reach()
    d = np.linalg.norm(obj.vertices - site.position, axis=1)
    idx = np.flatnonzero(d <= reach)
    if len(idx) == 0:
        raise RegionError(f"no vertex within reach {reach:.3f} m of the site")
    return idx


# --------------------------------------------------------------------------
# step 2: pairing
# --------------------------------------------------------------------------

def contact_points(skeleton, pose, coupling=hm.DEFAULT_COUPLING):
    """World position of each finger's contact anchor (pad centre), (5, 3)."""
    anchors = hm.anchor_positions(skeleton, hm.expand_pose(pose, coupling))
    return anchors[:, hm.CONTACT_ANCHOR]


def pair_fingertips(site, region, obj, skeleton, rng, pose=None, retries=8,
                    coupling=hm.DEFAULT_COUPLING):
    """Thumb plus 1-4 random fingers, each paired with a contact vertex.

    For each selected finger a minimal reaching radius ``r_c`` is drawn
    uniformly in [0, farthest region vertex]; among region vertices at least
    ``r_c`` from the wrist the one nearest the pre-grasp fingertip wins.
    """
    region = np.asarray(region)
    if len(region) == 0:
        raise PairingError("empty contact-feasible region")
    pose = pregrasp_pose(site) if pose is None else pose
    tips = contact_points(skeleton, pose, coupling)
    n_other = int(rng.integers(1, 5))
    others = np.sort(rng.choice(np.arange(1, hm.N_FINGERS), size=n_other, replace=False))
    verts = obj.vertices[region]
    dw = np.linalg.norm(verts - site.position, axis=1)
    far = float(dw.max())
    out = []
    for f in [0, *others.tolist()]:
        p_f = tips[f]
        for _ in range(retries):
            r_c = float(rng.uniform(0.0, far)) if far > 0 else 0.0
            ok = np.flatnonzero(dw >= r_c)
            if len(ok):
                break
        else:
            raise PairingError(f"finger {f}: no vertex satisfies the reaching radius")
        k = ok[np.argmin(np.linalg.norm(verts[ok] - p_f, axis=1))]
        out.append(ContactAssignment(f, p_f.copy(), verts[k].copy(), r_c, int(region[k])))
    return out


# --------------------------------------------------------------------------
# step 3: fitting
# --------------------------------------------------------------------------

class _Objective:
    """Residuals of the contact cost and their Jacobian over the 21 DoFs."""

    def __init__(self, obj, skeleton, assignments, w_rep, coupling):
        self.obj = obj
        self.skel = skeleton
        self.fingers = [a.finger_id for a in assignments]
        self.targets = np.array([a.contact_vertex for a in assignments])
        self.sw = math.sqrt(w_rep)
        self.coupling = coupling

    def evaluate(self, pose, jacobian=True):
        anchors, jac, _ = hm.compact_kinematics(self.skel, pose, self.coupling)
        pts = anchors.reshape(-1, 3)
        sdf, closest = self.obj.signed_distance(pts)
        pen = np.maximum(0.0, -sdf)
        att = anchors[self.fingers, hm.CONTACT_ANCHOR] - self.targets
        r = np.concatenate([att.reshape(-1), self.sw * pen])
        if not jacobian:
            return r, sdf
        J_att = jac[self.fingers, hm.CONTACT_ANCHOR].reshape(-1, 21)
        J_rep = np.zeros((len(pts), 21))
        jflat = jac.reshape(-1, 3, 21)
        for i in np.flatnonzero(pen > 0):
            g = pts[i] - closest[i]
            n = np.linalg.norm(g)
            if n > 0:
                J_rep[i] = self.sw * (g / n) @ jflat[i]
        return r, sdf, np.vstack([J_att, J_rep])


def _step(pose, delta, lo, hi):
    R = so3_exp(delta[:3]) @ quat_to_matrix(pose.wrist.quat)
    t = pose.wrist.translation + delta[3:6]
    fingers = np.clip(pose.finger_vector() + delta[6:], lo, hi)
    return hm.HandPoseCompact.from_finger_vector(RigidTransform.from_matrix(R, t), fingers)


def _projected_gradient(g, x, lo, hi):
    g = g.copy()
    f = g[6:]
    at_lo = (x <= lo) & (f > 0)
    at_hi = (x >= hi) & (f < 0)
    f[at_lo | at_hi] = 0.0
    return g


def fit_grasp(init, assignments, obj, skeleton, config=None):
    """Minimise attraction plus anchor repulsion over the hand's C-space.

    Damped Gauss-Newton (Levenberg-Marquardt) with step rejection, so the
    cost never increases across accepted iterations. Finger angles are
    clamped to the joint limits after every step.
    """
    cfg = config or GraspConfig()
    if not assignments:
        raise InvalidArgument("at least one contact assignment is required")
    lo, hi = hm.compact_bounds(cfg.limits, cfg.coupling)
    objective = _Objective(obj, skeleton, assignments, cfg.w_rep, cfg.coupling)
    pose = hm.HandPoseCompact.from_finger_vector(init.wrist, np.clip(init.finger_vector(), lo, hi))
    r, sdf, J = objective.evaluate(pose)
    cost = float(r @ r)
    history = [cost]
    mu = 1e-3
    converged = False
    it = 0
    while it < cfg.max_iters:
        g = _projected_gradient(2.0 * J.T @ r, pose.finger_vector(), lo, hi)
        if np.linalg.norm(g) < cfg.gtol:
            converged = True
            break
        A = J.T @ J
        D = np.diag(A) + 1e-9
        b = -J.T @ r
        improved = False
        while mu < 1e12:
            delta = np.linalg.solve(A + mu * np.diag(D), b)
            trial = _step(pose, delta, lo, hi)
            r_t, sdf_t, J_t = objective.evaluate(trial)
            cost_t = float(r_t @ r_t)
            if cost_t < cost:
                improved = True
                break
            mu *= 4.0
        it += 1
        if not improved:
            converged = True  # no descent direction left at machine precision
            break
        rel = (cost - cost_t) / max(cost, 1e-300)
        pose, r, sdf, J, cost = trial, r_t, sdf_t, J_t, cost_t
        history.append(cost)
        mu = max(mu / 3.0, 1e-12)
        if rel < 1e-12:
            converged = True
            break
        w = cfg.stall_window
        if w and len(history) > w and history[-w - 1] - cost <= cfg.ftol * history[-w - 1]:
            converged = True
            break
    return _candidate(obj, pose, assignments, sdf, cost, converged, it, history)


def _candidate(obj, pose, assignments, sdf, cost, converged, iterations, history):
    sdf = sdf.reshape(hm.N_FINGERS, 6)
    contact = {a.finger_id: float(abs(sdf[a.finger_id, hm.CONTACT_ANCHOR])) for a in assignments}
    return GraspCandidate(obj.id, pose, list(assignments),
                          float(max(0.0, -sdf.min())), contact, float(cost), converged,
                          iterations, cost_history=history)


# --------------------------------------------------------------------------
# validation and generation
# --------------------------------------------------------------------------

@dataclass
class GraspVerdict:
    accepted: bool
    reasons: list
    max_penetration: float
    contact_distance: dict


def validate_grasp(candidate, obj, skeleton, eps_contact=0.002, tau_pen=0.002,
                   limits=hm.DEFAULT_LIMITS, coupling=hm.DEFAULT_COUPLING):
    """Recompute geometry from the pose and apply the interaction rules."""
    reasons = []
    exp_pose = hm.expand_pose(candidate.pose, coupling)
    anchors = hm.anchor_positions(skeleton, exp_pose)
    sdf, _ = obj.signed_distance(anchors.reshape(-1, 3))
    sdf = sdf.reshape(hm.N_FINGERS, 6)
    pen = float(max(0.0, -sdf.min()))
    assigned = sorted({a.finger_id for a in candidate.assignments})
    dist = {f: float(abs(sdf[f, hm.CONTACT_ANCHOR])) for f in assigned}
    if not (0 in dist and dist[0] <= eps_contact):
        reasons.append("no-thumb-contact")
    if not any(dist[f] <= eps_contact for f in assigned if f != 0):
        reasons.append("no-finger-contact")
    if pen > tau_pen:
        reasons.append("penetration")
    if not hm.validate_pose(exp_pose, limits, coupling).valid:
        reasons.append("invalid-pose")
    return GraspVerdict(not reasons, reasons, pen, dist)


def _attempt(obj, skeleton, site, site_index, seed, cfg):
    rng = np.random.default_rng(seed)
    try:
        region = contact_feasible_region(site, obj, skeleton)
    except RegionError:
        return None, ["region"]
    init = pregrasp_pose(site)
    try:
        assignments = pair_fingertips(site, region, obj, skeleton, rng, init,
                                      cfg.pairing_retries, cfg.coupling)
    except PairingError:
        return None, ["pairing"]
    cand = fit_grasp(init, assignments, obj, skeleton, cfg)
    cand.site_index = site_index
    if not cand.converged:
        return None, ["unconverged"]
    if cand.residual > cfg.residual_cap:
        return None, ["residual"]
    verdict = validate_grasp(cand, obj, skeleton, cfg.eps_contact, cfg.tau_pen,
                             cfg.limits, cfg.coupling)
    if not verdict.accepted:
        return None, verdict.reasons
    return cand, []


def generate_poses(obj, target_count, config=None, rng=None, skeleton=None, stats=None):
    """Run attempts until ``target_count`` grasps pass or the budget runs out.

    Returns accepted candidates sorted by (fit residual, site index). ``stats``,
    if given, is filled with attempt and per-reason rejection counts.
    """
    cfg = config or GraspConfig()
    if target_count < 1:
        raise InvalidArgument("target_count must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    skeleton = skeleton or hm.build_skeleton()
    budget = cfg.budget_factor * target_count
    sites = offset_surface_sites(obj, cfg.offset, cfg.n_sites, rng)
    seeds = rng.integers(0, 2 ** 63 - 1, size=budget)
    accepted, rejections = [], {}
    attempts = 0
    chunk = max(1, cfg.threads) * 4
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for start in range(0, budget, chunk):
            ids = range(start, min(budget, start + chunk))
            jobs = [(obj, skeleton, sites[a % len(sites)], a % len(sites), seeds[a], cfg)
                    for a in ids]
            results = (pool.map(lambda j: _attempt(*j), jobs) if pool
                       else (_attempt(*j) for j in jobs))
            for cand, reasons in results:
                attempts += 1
                if cand is not None:
                    accepted.append(cand)
                for reason in reasons:
                    rejections[reason] = rejections.get(reason, 0) + 1
                if len(accepted) >= target_count:
                    break
            if len(accepted) >= target_count:
                break
    finally:
        if pool:
            pool.shutdown()
    if stats is not None:
        stats.update(attempts=attempts, accepted=len(accepted), rejections=dict(rejections))
    if not accepted:
        raise GenerationError(f"{obj.id}: no grasp accepted in {budget} attempts", rejections)
    accepted.sort(key=lambda c: (c.residual, c.site_index))
    return accepted


def write_grasps(path, candidates):
    """One candidate per line, JSON."""
    with open(path, "w") as fh:
        for c in candidates:
            fh.write(json.dumps(c.to_dict()) + "\n")


def read_grasps(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(GraspCandidate.from_dict(json.loads(line)))
                except (KeyError, ValueError, TypeError) as exc:
                    raise FormatError(f"{path}:{lineno}: malformed grasp record") from exc
    return out
