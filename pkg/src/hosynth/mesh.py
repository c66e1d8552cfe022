"""Triangle meshes: OBJ ingest, primitive builders and point queries."""
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import MeshError


@dataclass(eq=False)
class ObjectModel:
    id: str
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3 or len(self.vertices) < 4:
            raise MeshError(f"{self.id}: need at least 4 vertices of dimension 3")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3 or len(self.triangles) < 4:
            raise MeshError(f"{self.id}: need at least 4 triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise MeshError(f"{self.id}: triangle index out of range")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError(f"{self.id}: non-finite vertex")
        if np.any(self.areas <= 1e-18):
            raise MeshError(f"{self.id}: degenerate triangle")

    @cached_property
    def v0(self):
        return np.ascontiguousarray(self.vertices[self.triangles[:, 0]])

    @cached_property
    def v1(self):
        return np.ascontiguousarray(self.vertices[self.triangles[:, 1]])

    @cached_property
    def v2(self):
        return np.ascontiguousarray(self.vertices[self.triangles[:, 2]])

    @cached_property
    def face_normals(self):
        n = np.cross(self.v1 - self.v0, self.v2 - self.v0)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def areas(self):
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    @cached_property
    def tri_centers(self):
        return np.ascontiguousarray((self.v0 + self.v1 + self.v2) / 3.0)

    @cached_property
    def tri_radii(self):
        c = self.tri_centers
        r = np.stack([np.linalg.norm(v - c, axis=1) for v in (self.v0, self.v1, self.v2)])
        return np.ascontiguousarray(r.max(axis=0) * (1.0 + 1e-12))

    @cached_property
    def vertex_tree(self):
        return cKDTree(self.vertices)

    @property
    def centroid(self):
        """Area-weighted surface centroid."""
        c = self.tri_centers
        return (c * self.areas[:, None]).sum(axis=0) / self.areas.sum()

    @property
    def corners(self):
        """The 8 corners of the axis-aligned bounding box, x-slowest."""
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return np.array([[x, y, z] for x in (lo[0], hi[0])
                         for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])

    @property
    def diameter(self):
        from scipy.spatial import ConvexHull
        try:
            hv = self.vertices[ConvexHull(self.vertices).vertices]
        except Exception:
            hv = self.vertices
        d = np.linalg.norm(hv[:, None] - hv[None], axis=-1)
        return float(d.max())

    # ---- queries --------------------------------------------------------

    def closest(self, points):
        """Unsigned distance, closest surface point and triangle per query point."""
        p = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        return kernels.closest_points(p, self.v0, self.v1, self.v2,
                                      self.tri_centers, self.tri_radii)

    @cached_property
    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def contains(self, points):
        """Ray-parity inside test (majority over three ray directions)."""
        p = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        lo, hi = self.bounds
        out = np.zeros(len(p), dtype=bool)
        cand = np.flatnonzero(np.all((p >= lo) & (p <= hi), axis=1))
        if len(cand):
            out[cand] = kernels.inside_mask(np.ascontiguousarray(p[cand]), self.v0, self.v1,
                                            self.v2, kernels.RAY_DIRS, self.tri_centers,
                                            self.tri_radii)
        return out

    def signed_distance(self, points):
        """Negative inside. Returns (sdf, closest points)."""
        d, q, _ = self.closest(points)
        inside = self.contains(points)
        return np.where(inside, -d, d), q

    def nearest_vertex(self, points):
        d, i = self.vertex_tree.query(np.atleast_2d(points))
        return d, i

    def sample_surface(self, n, rng):
        """Area-uniform surface samples; returns points and triangle ids."""
        cdf = np.cumsum(self.areas)
        tri = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
        tri = np.minimum(tri, len(self.areas) - 1)
        r1, r2 = rng.random(n), rng.random(n)
        s = np.sqrt(r1)
        a, b, c = 1.0 - s, s * (1.0 - r2), s * r2
        pts = a[:, None] * self.v0[tri] + b[:, None] * self.v1[tri] + c[:, None] * self.v2[tri]
        return pts, tri

    def check_closed(self):
        """True if every edge is shared by exactly two triangles."""
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


# --------------------------------------------------------------------------
# OBJ
# --------------------------------------------------------------------------

def load_obj(path, object_id=None):
    """Read vertices and faces; polygons are fan-triangulated."""
    verts, tris = [], []
    try:
        fh = open(path)
    except OSError as exc:
        raise MeshError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                    idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                    for k in range(1, len(idx) - 1):
                        tris.append([idx[0], idx[k], idx[k + 1]])
            except (ValueError, IndexError) as exc:
                raise MeshError(f"{path}:{lineno}: malformed line") from exc
    if object_id is None:
        object_id = os.path.splitext(os.path.basename(path))[0]
    return ObjectModel(object_id, np.array(verts), np.array(tris))


def save_obj(obj, path):
    with open(path, "w") as fh:
        for v in obj.vertices:
            fh.write("v %r %r %r\n" % tuple(float(x) for x in v))
        for t in obj.triangles:
            fh.write("f %d %d %d\n" % tuple(int(i) + 1 for i in t))


# --------------------------------------------------------------------------
# primitives (closed, outward-oriented)
# --------------------------------------------------------------------------

def icosphere(radius, subdivisions=3, object_id="sphere", center=(0.0, 0.0, 0.0)):
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
             [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    verts = [list(np.array(v, float) / np.linalg.norm(v)) for v in verts]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9],
             [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2],
             [3, 2, 6], [3, 6, 8], [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10],
             [8, 6, 7], [9, 8, 1]]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = np.add(verts[a], verts[b])
                verts.append(list(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    v = np.array(verts) * radius + np.asarray(center, float)
    return ObjectModel(object_id, v, np.array(faces))


def box(extents, divisions=6, object_id="box"):
    """Axis-aligned box centred at the origin, each face a ``divisions`` grid."""
    ex = np.asarray(extents, dtype=float) / 2.0
    n = int(divisions)
    index = {}
    verts, tris = [], []

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    g = np.linspace(-1.0, 1.0, n + 1)
    for axis in range(3):
        for sign in (-1.0, 1.0):
            u_ax, v_ax = [a for a in range(3) if a != axis]
            if sign < 0:
                u_ax, v_ax = v_ax, u_ax
            # orient so that (u x v) points along sign * axis
            if np.cross(np.eye(3)[u_ax], np.eye(3)[v_ax])[axis] * sign < 0:
                u_ax, v_ax = v_ax, u_ax
            ids = np.zeros((n + 1, n + 1), dtype=np.int64)
            for i, a in enumerate(g):
                for j, b in enumerate(g):
                    p = np.zeros(3)
                    p[axis] = sign
                    p[u_ax], p[v_ax] = a, b
                    ids[i, j] = vid(p * ex)
            for i in range(n):
                for j in range(n):
                    tris.append([ids[i, j], ids[i + 1, j], ids[i + 1, j + 1]])
                    tris.append([ids[i, j], ids[i + 1, j + 1], ids[i, j + 1]])
    return ObjectModel(object_id, np.array(verts), np.array(tris))


def cylinder(radius, height, segments=72, rings=8, cap_rings=3, object_id="cylinder"):
    """Closed cylinder along z centred at the origin.

    ``segments`` sets the angular resolution; rotations about z by multiples of
    ``2*pi/segments`` map the vertex set onto itself.
    """
    ang = 2.0 * np.pi * np.arange(segments) / segments
    circle = np.column_stack([np.cos(ang), np.sin(ang)])
    verts, tris = [], []
    zs = np.linspace(-height / 2.0, height / 2.0, rings + 1)
    side = []
    for z in zs:
        side.append([len(verts) + k for k in range(segments)])
        verts += [[radius * c[0], radius * c[1], z] for c in circle]
    for r in range(rings):
        for k in range(segments):
            a, b = side[r][k], side[r][(k + 1) % segments]
            c, d = side[r + 1][(k + 1) % segments], side[r + 1][k]
            tris += [[a, b, c], [a, c, d]]
    for top in (False, True):
        z = zs[-1] if top else zs[0]
        rim = side[-1] if top else side[0]
        ringsets = [rim]
        for q in range(cap_rings - 1, 0, -1):
            rr = radius * q / cap_rings
            ringsets.append([len(verts) + k for k in range(segments)])
            verts += [[rr * c[0], rr * c[1], z] for c in circle]
        centre = len(verts)
        verts.append([0.0, 0.0, z])
        for outer, inner in zip(ringsets[:-1], ringsets[1:]):
            for k in range(segments):
                a, b = outer[k], outer[(k + 1) % segments]
                c, d = inner[(k + 1) % segments], inner[k]
                quad = [[a, b, c], [a, c, d]] if top else [[a, c, b], [a, d, c]]
                tris += quad
        inner = ringsets[-1]
        for k in range(segments):
            a, b = inner[k], inner[(k + 1) % segments]
            tris.append([a, b, centre] if top else [a, centre, b])
    return ObjectModel(object_id, np.array(verts), np.array(tris))
