"""Viewpoint grid on the unit sphere, viewpoint jitter and look-at extrinsics."""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .rigid import RigidTransform, axis_angle

TWO_PI = 2.0 * np.pi
DEFAULT_RADIUS = 0.6
_POLE_EPS = 1e-6


def direction_from(u, phi):
    """Unit direction for elevation parameter ``u`` and azimuth ``phi``.

    With ``u ~ U[-1, 1]`` and ``phi ~ U[0, 2pi)`` the directions are uniform
    over the sphere (Archimedes' hat-box theorem).
    """
    if not -1.0 <= u <= 1.0:
        raise InvalidArgument(f"u must lie in [-1, 1], got {u}")
    s = np.sqrt(1.0 - u * u)
    return np.array([s * np.cos(phi), s * np.sin(phi), u])


@dataclass(frozen=True, eq=False)
class ViewpointSample:
    u: float
    phi: float
    inplane: float = 0.0

    @property
    def direction(self):
        return direction_from(self.u, self.phi)

    def to_dict(self):
        return {"u": float(self.u), "phi": float(self.phi), "inplane": float(self.inplane)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["u"]), float(d["phi"]), float(d["inplane"]))

    def __eq__(self, other):
        return (isinstance(other, ViewpointSample) and self.u == other.u
                and self.phi == other.phi and self.inplane == other.inplane)

    __hash__ = None


def sphere_grid(n_u, n_phi):
    """``n_u`` elevation midpoints crossed with ``n_phi`` azimuths.

    u values are the midpoints of ``n_u`` equal subdivisions of [-1, 1], so
    the poles are never hit; azimuths are ``2*pi*j/n_phi``. Ordering is
    u-major.
    """
    if n_u < 1 or n_phi < 1:
        raise InvalidArgument("grid counts must be >= 1")
    us = -1.0 + (2.0 * np.arange(n_u) + 1.0) / n_u
    phis = TWO_PI * np.arange(n_phi) / n_phi
    return [ViewpointSample(float(u), float(p)) for u in us for p in phis]


def disturb_viewpoint(vp, delta_u, delta_phi, rng):
    if delta_u < 0 or delta_phi < 0:
        raise InvalidArgument("disturbance half-widths must be >= 0")
    du = rng.uniform(-delta_u, delta_u) if delta_u > 0 else 0.0
    dphi = rng.uniform(-delta_phi, delta_phi) if delta_phi > 0 else 0.0
    inplane = rng.uniform(0.0, TWO_PI)
    u = min(1.0, max(-1.0, vp.u + du))
    phi = (vp.phi + dphi) % TWO_PI
    return ViewpointSample(float(u), float(phi), float(inplane))


def look_at_rotation(direction, inplane=0.0):
    """Camera-to-world rotation, OpenCV axes (x right, y down, z forward).

    The camera sits along ``direction`` from the target and looks back at it.
    """
    forward = -np.asarray(direction, dtype=float)
    forward /= np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(forward @ up) > 1.0 - _POLE_EPS:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.column_stack([right, down, forward])
    if inplane:
        R = R @ axis_angle([0.0, 0.0, 1.0], inplane)
    return R


def camera_extrinsics(vp, radius=DEFAULT_RADIUS, target=(0.0, 0.0, 0.0)):
    """Camera pose (camera-to-world) for viewpoint ``vp``."""
    if not radius > 0:
        raise InvalidArgument("radius must be positive")
    d = vp.direction
    center = np.asarray(target, dtype=float) + radius * d
    return RigidTransform.from_matrix(look_at_rotation(d, vp.inplane), center)
