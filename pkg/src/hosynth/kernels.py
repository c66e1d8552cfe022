"""Hot numeric kernels: point-to-mesh queries, sum-tree sampling and hand chains.

Every kernel exists twice: a numba loop version (``*_nb``) and a vectorised
numpy version (``*_np``). The public names at the bottom of the module are
bound to one of them according to :mod:`hosynth._accel`.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# Three fixed, mutually non-coplanar ray directions for the parity vote.
RAY_DIRS = np.array([
    [0.5773502691896258, 0.5773502691896258, 0.5773502691896258],
    [-0.2672612419124244, 0.5345224838248488, 0.8017837257372732],
    [0.8164965809277261, -0.4082482904638631, -0.4082482904638631],
])

_CHUNK = 1 << 21


# --------------------------------------------------------------------------
# closest point on a triangle soup
# --------------------------------------------------------------------------

@njit
def _closest_on_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (ax + abx * v + acx * w, ay + aby * v + acy * w,
            az + abz * v + acz * w)


@njit
def closest_points_nb(points, v0, v1, v2, centers, radii):
    n = points.shape[0]
    m = v0.shape[0]
    dist = np.empty(n)
    closest = np.empty((n, 3))
    tri = np.empty(n, dtype=np.int64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best = np.inf
        bi = -1
        bx = by = bz = 0.0
        for j in range(m):
            dx = px - centers[j, 0]
            dy = py - centers[j, 1]
            dz = pz - centers[j, 2]
            # bounding-sphere cull: every point of triangle j is at least
            # |p - center| - radius away
            lb = np.sqrt(dx * dx + dy * dy + dz * dz) - radii[j]
            if lb > best:
                continue
            qx, qy, qz = _closest_on_triangle(
                px, py, pz,
                v0[j, 0], v0[j, 1], v0[j, 2],
                v1[j, 0], v1[j, 1], v1[j, 2],
                v2[j, 0], v2[j, 1], v2[j, 2])
            ex, ey, ez = px - qx, py - qy, pz - qz
            d = np.sqrt(ex * ex + ey * ey + ez * ez)
            if d < best:
                best = d
                bi = j
                bx, by, bz = qx, qy, qz
        dist[i] = best
        tri[i] = bi
        closest[i, 0] = bx
        closest[i, 1] = by
        closest[i, 2] = bz
    return dist, closest, tri


def _closest_on_triangles_np(p, a, b, c):
    """Vectorised closest points; broadcasting shapes (..., 3)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("...k,...k->...", ab, ap)
    d2 = np.einsum("...k,...k->...", ac, ap)
    bp = p - b
    d3 = np.einsum("...k,...k->...", ab, bp)
    d4 = np.einsum("...k,...k->...", ac, bp)
    cp = p - c
    d5 = np.einsum("...k,...k->...", ab, cp)
    d6 = np.einsum("...k,...k->...", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
    v_in = vb * denom
    w_in = vc * denom

    shape = np.broadcast_shapes(p.shape, a.shape)
    out = a + ab * v_in[..., None] + ac * w_in[..., None]
    out = np.broadcast_to(out, shape).copy()
    # regions in reverse priority order so earlier tests overwrite later ones
    m = (va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0)
    out = np.where(m[..., None], b + w_bc[..., None] * (c - b), out)
    m = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
    out = np.where(m[..., None], a + w_ac[..., None] * ac, out)
    m = (d6 >= 0.0) & (d5 <= d6)
    out = np.where(m[..., None], np.broadcast_to(c, shape), out)
    m = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
    out = np.where(m[..., None], a + v_ab[..., None] * ab, out)
    m = (d3 >= 0.0) & (d4 <= d3)
    out = np.where(m[..., None], np.broadcast_to(b, shape), out)
    m = (d1 <= 0.0) & (d2 <= 0.0)
    out = np.where(m[..., None], np.broadcast_to(a, shape), out)
    return out


def closest_points_np(points, v0, v1, v2, centers=None, radii=None):
    n, m = points.shape[0], v0.shape[0]
    dist = np.empty(n)
    closest = np.empty((n, 3))
    tri = np.empty(n, dtype=np.int64)
    step = max(1, _CHUNK // max(m, 1))
    for s in range(0, n, step):
        p = points[s:s + step, None, :]
        q = _closest_on_triangles_np(p, v0[None], v1[None], v2[None])
        d = np.sqrt(np.sum((p - q) ** 2, axis=-1))
        j = np.argmin(d, axis=1)
        rows = np.arange(len(j))
        dist[s:s + step] = d[rows, j]
        closest[s:s + step] = q[rows, j]
        tri[s:s + step] = j
    return dist, closest, tri


# --------------------------------------------------------------------------
# inside test: ray parity, majority vote over three directions
# --------------------------------------------------------------------------

@njit
def inside_mask_nb(points, v0, v1, v2, dirs, centers, radii):
    n = points.shape[0]
    m = v0.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    eps = 1e-15
    for i in range(n):
        votes = 0
        for k in range(dirs.shape[0]):
            dx, dy, dz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
            hits = 0
            for j in range(m):
                # skip triangles whose bounding sphere misses the ray
                wx = centers[j, 0] - points[i, 0]
                wy = centers[j, 1] - points[i, 1]
                wz = centers[j, 2] - points[i, 2]
                tc = wx * dx + wy * dy + wz * dz
                r = radii[j]
                if tc < -r:
                    continue
                if wx * wx + wy * wy + wz * wz - tc * tc > r * r:
                    continue
                e1x = v1[j, 0] - v0[j, 0]
                e1y = v1[j, 1] - v0[j, 1]
                e1z = v1[j, 2] - v0[j, 2]
                e2x = v2[j, 0] - v0[j, 0]
                e2y = v2[j, 1] - v0[j, 1]
                e2z = v2[j, 2] - v0[j, 2]
                hx = dy * e2z - dz * e2y
                hy = dz * e2x - dx * e2z
                hz = dx * e2y - dy * e2x
                det = e1x * hx + e1y * hy + e1z * hz
                if abs(det) < eps:
                    continue
                f = 1.0 / det
                sx = points[i, 0] - v0[j, 0]
                sy = points[i, 1] - v0[j, 1]
                sz = points[i, 2] - v0[j, 2]
                u = f * (sx * hx + sy * hy + sz * hz)
                if u < 0.0 or u > 1.0:
                    continue
                qx = sy * e1z - sz * e1y
                qy = sz * e1x - sx * e1z
                qz = sx * e1y - sy * e1x
                v = f * (dx * qx + dy * qy + dz * qz)
                if v < 0.0 or u + v > 1.0:
                    continue
                t = f * (e2x * qx + e2y * qy + e2z * qz)
                if t > 0.0:
                    hits += 1
            if hits % 2 == 1:
                votes += 1
        out[i] = votes * 2 > dirs.shape[0]
    return out


def inside_mask_np(points, v0, v1, v2, dirs, centers=None, radii=None):
    n, m = points.shape[0], v0.shape[0]
    e1 = v1 - v0
    e2 = v2 - v0
    votes = np.zeros(n, dtype=np.int64)
    step = max(1, _CHUNK // max(m, 1))
    for d in dirs:
        h = np.cross(d, e2)
        det = np.einsum("jk,jk->j", e1, h)
        ok = np.abs(det) >= 1e-15
        with np.errstate(divide="ignore"):
            f = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        for s in range(0, n, step):
            sv = points[s:s + step, None, :] - v0[None]
            u = f * np.einsum("ijk,jk->ij", sv, h)
            q = np.cross(sv, e1[None])
            v = f * (q @ d)
            t = f * np.einsum("ijk,jk->ij", q, e2)
            hit = ok & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > 0)
            votes[s:s + step] += hit.sum(axis=1) % 2
    return votes * 2 > len(dirs)


# --------------------------------------------------------------------------
# sum tree for weighted sampling without replacement
# --------------------------------------------------------------------------

def tree_capacity(n):
    cap = 1
    while cap < n:
        cap *= 2
    return cap


def build_tree(weights):
    """Array-backed binary sum tree; leaves at ``[cap, cap + n)``."""
    n = len(weights)
    cap = tree_capacity(n)
    tree = np.zeros(2 * cap)
    tree[cap:cap + n] = weights
    lo = cap
    while lo > 1:
        hi = lo
        lo //= 2
        tree[lo:hi] = tree[2 * lo:2 * hi:2] + tree[2 * lo + 1:2 * hi:2]
    return tree


@njit
def tree_draw_nb(tree, cap, uniforms):
    """Sequential draw-and-remove; returns -1 for draws past exhaustion."""
    out = np.empty(uniforms.shape[0], dtype=np.int64)
    for k in range(uniforms.shape[0]):
        total = tree[1]
        if not total > 0.0:
            out[k] = -1
            continue
        target = uniforms[k] * total
        node = 1
        while node < cap:
            left = 2 * node
            right = left + 1
            if (target < tree[left] and tree[left] > 0.0) or not tree[right] > 0.0:
                node = left
            else:
                target -= tree[left]
                node = right
        out[k] = node - cap
        tree[node] = 0.0
        node //= 2
        while node >= 1:
            tree[node] = tree[2 * node] + tree[2 * node + 1]
            node //= 2
    return out


def tree_draw_np(tree, cap, uniforms):
    out = np.empty(len(uniforms), dtype=np.int64)
    for k, u in enumerate(uniforms):
        total = tree[1]
        if not total > 0.0:
            out[k] = -1
            continue
        target = u * total
        node = 1
        while node < cap:
            left = 2 * node
            if (target < tree[left] and tree[left] > 0.0) or not tree[left + 1] > 0.0:
                node = left
            else:
                target -= tree[left]
                node = left + 1
        out[k] = node - cap
        tree[node] = 0.0
        node //= 2
        while node >= 1:
            tree[node] = tree[2 * node] + tree[2 * node + 1]
            node //= 2
    return out


# --------------------------------------------------------------------------
# hand chains: fingertip anchors and their Jacobian for a compact pose
# --------------------------------------------------------------------------

@njit
def _rodrigues(ax, angle, out):
    c, s = np.cos(angle), np.sin(angle)
    x, y, z = ax[0], ax[1], ax[2]
    C = 1.0 - c
    out[0, 0] = c + x * x * C
    out[0, 1] = x * y * C - z * s
    out[0, 2] = x * z * C + y * s
    out[1, 0] = y * x * C + z * s
    out[1, 1] = c + y * y * C
    out[1, 2] = y * z * C - x * s
    out[2, 0] = z * x * C - y * s
    out[2, 1] = z * y * C + x * s
    out[2, 2] = c + z * z * C


@njit
def _cross_into(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit
def compact_chain_nb(offsets, frames, anchor_pts, splay, bend_mcp, bend_pd, R, t, coupling):
    """Anchors (5, 6, 3), Jacobian (5, 6, 3, 21) and joint positions (21, 3).

    Splay and bend only (no twist), distal bend = coupling * proximal bend.
    """
    anchors = np.zeros((5, 6, 3))
    jac = np.zeros((5, 6, 3, 21))
    wpos = np.zeros((21, 3))
    wpos[0] = t
    Rs = np.empty((3, 3))
    Rb = np.empty((3, 3))
    axes = np.empty((3, 3))     # world bend/splay axes
    jp = np.empty((3, 3))       # world positions of the three rotational joints
    v = np.empty(3)
    cr = np.empty(3)
    for f in range(5):
        j0 = 1 + 4 * f
        acc = np.eye(3)
        pos = offsets[j0].copy()
        bends = (bend_mcp[f], bend_pd[f], coupling * bend_pd[f])
        sp_world = R @ frames[j0][:, 1].copy()
        for k in range(3):
            F = frames[j0 + k]
            if k == 0:
                _rodrigues(F[:, 1].copy(), splay[f], Rs)
                acc = acc @ Rs
            ax_local = acc @ F[:, 2].copy()
            axes[k] = R @ ax_local
            jp[k] = R @ pos + t
            _rodrigues(F[:, 2].copy(), bends[k], Rb)
            acc = acc @ Rb
            pos = pos + acc @ offsets[j0 + k + 1]
        for k in range(3):
            wpos[j0 + k] = jp[k]
        wpos[j0 + 3] = R @ pos + t
        tipF = frames[j0 + 3]
        c = 6 + 3 * f
        for i in range(6):
            local = pos + acc @ (tipF @ anchor_pts[f, i])
            w = R @ local + t
            anchors[f, i] = w
            rel = w - t
            # d w / d omega = -skew(rel)
            jac[f, i, 0, 1] = rel[2]
            jac[f, i, 0, 2] = -rel[1]
            jac[f, i, 1, 0] = -rel[2]
            jac[f, i, 1, 2] = rel[0]
            jac[f, i, 2, 0] = rel[1]
            jac[f, i, 2, 1] = -rel[0]
            for d in range(3):
                jac[f, i, d, 3 + d] = 1.0
            v[:] = w - jp[0]
            _cross_into(sp_world, v, cr)
            jac[f, i, :, c] = cr
            _cross_into(axes[0], v, cr)
            jac[f, i, :, c + 1] = cr
            v[:] = w - jp[1]
            _cross_into(axes[1], v, cr)
            jac[f, i, :, c + 2] = cr
            v[:] = w - jp[2]
            _cross_into(axes[2], v, cr)
            jac[f, i, :, c + 2] += coupling * cr
    return anchors, jac, wpos


# --------------------------------------------------------------------------
# hand chains: joint positions for an expanded pose
# --------------------------------------------------------------------------

@njit
def local_fk_nb(offsets, frames, angles):
    """Wrist-frame joint positions (21, 3) and carried rotations (21, 3, 3).

    ``angles`` is (5, 3, 3) as (finger, joint, twist/splay/bend); each joint
    applies twist, then splay, then bend about its frame columns.
    """
    pos = np.zeros((21, 3))
    G = np.zeros((21, 3, 3))
    G[0] = np.eye(3)
    E = np.empty((3, 3))
    tmp = np.empty((3, 3))
    for f in range(5):
        j0 = 1 + 4 * f
        acc = np.eye(3)
        pos[j0] = offsets[j0]
        for k in range(3):
            j = j0 + k
            for axis in range(3):
                a = angles[f, k, axis]
                if a != 0.0:
                    _rodrigues(frames[j, :, axis].copy(), a, E)
                    for r in range(3):
                        for c in range(3):
                            tmp[r, c] = acc[r, 0] * E[0, c] + acc[r, 1] * E[1, c] \
                                + acc[r, 2] * E[2, c]
                    acc[:, :] = tmp
            G[j] = acc
            for r in range(3):
                pos[j + 1, r] = pos[j, r] + (acc[r, 0] * offsets[j + 1, 0]
                                             + acc[r, 1] * offsets[j + 1, 1]
                                             + acc[r, 2] * offsets[j + 1, 2])
        G[j0 + 3] = acc
    return pos, G


def _axis_rotations(axes, angles):
    """Batched Rodrigues for unit axes (n, 3) and angles (n,)."""
    c, s = np.cos(angles), np.sin(angles)
    x, y, z = axes[:, 0], axes[:, 1], axes[:, 2]
    C = 1.0 - c
    return np.stack([
        np.stack([c + x * x * C, x * y * C - z * s, x * z * C + y * s], axis=-1),
        np.stack([y * x * C + z * s, c + y * y * C, y * z * C - x * s], axis=-1),
        np.stack([z * x * C - y * s, z * y * C + x * s, c + z * z * C], axis=-1)], axis=1)


_LEVELS = np.array([[1 + 4 * f + k for f in range(5)] for k in range(4)])


def local_fk_np(offsets, frames, angles):
    """Same as :func:`local_fk_nb`; all five fingers advance one level at a time."""
    pos = np.zeros((21, 3))
    G = np.tile(np.eye(3), (21, 1, 1))
    pos[_LEVELS[0]] = offsets[_LEVELS[0]]
    acc = np.tile(np.eye(3), (5, 1, 1))
    for k in range(3):
        j, child = _LEVELS[k], _LEVELS[k + 1]
        F = frames[j]
        for axis in range(3):
            a = angles[:, k, axis]
            if a.any():
                acc = acc @ _axis_rotations(F[:, :, axis], a)
        G[j] = acc
        pos[child] = pos[j] + np.einsum("fij,fj->fi", acc, offsets[child])
    G[_LEVELS[3]] = acc
    return pos, G


if USE_NUMBA:
    closest_points = closest_points_nb
    inside_mask = inside_mask_nb
    tree_draw = tree_draw_nb
    local_fk = local_fk_nb
else:
    closest_points = closest_points_np
    inside_mask = inside_mask_np
    tree_draw = tree_draw_np
    local_fk = local_fk_np
