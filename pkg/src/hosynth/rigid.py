"""Rotations and rigid transforms.

Quaternions are stored scalar-first ``(w, x, y, z)``. A :class:`RigidTransform`
keeps the quaternion itself as its canonical state so that serialising and
reloading a transform is exact.
"""
from dataclasses import dataclass, field

import numpy as np


def skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def so3_exp(rotvec):
    """Rodrigues' formula for an axis-angle vector."""
    r = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(r)
    if theta < 1e-12:
        return np.eye(3) + skew(r)
    k = skew(r / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    return so3_exp(axis / np.linalg.norm(axis) * angle)


def _vee(R):
    return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])


def rotation_angle(R):
    """Angle in [0, pi]; atan2 keeps it accurate near 0 and pi."""
    R = np.asarray(R, dtype=float)
    return float(np.arctan2(0.5 * np.linalg.norm(_vee(R)), 0.5 * (np.trace(R) - 1.0)))


def so3_log(R):
    R = np.asarray(R, dtype=float)
    theta = rotation_angle(R)
    if theta < 1e-12:
        return np.zeros(3)
    w = _vee(R)
    if np.pi - theta < 1e-4:
        # near pi: axis from the symmetric part, sign from the skew part
        S = (R + R.T) / 2.0 - np.cos(theta) * np.eye(3)
        i = int(np.argmax(np.diag(S)))
        axis = S[:, i] / np.linalg.norm(S[:, i])
        if axis @ w < 0:
            axis = -axis
        return axis * theta
    return w * (theta / (2.0 * np.sin(theta)))


def quat_to_matrix(q):
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R):
    """Shepperd's method; the returned quaternion has ``w >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
             (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s,
             (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s,
             (R[1, 2] + R[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
             (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def rotation_between(a, b):
    """Minimal rotation taking unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, float) / np.linalg.norm(a)
    b = np.asarray(b, float) / np.linalg.norm(b)
    c = float(np.dot(a, b))
    if c > 1.0 - 1e-15:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        # any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        return axis_angle(axis, np.pi)
    v = np.cross(a, b)
    k = skew(v)
    return np.eye(3) + k + k @ k / (1.0 + c)


def random_rotation(rng):
    q = rng.normal(size=4)
    return quat_to_matrix(q)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def from_matrix(cls, R, t=None):
        t = np.zeros(3) if t is None else np.asarray(t, dtype=float)
        return cls(matrix_to_quat(R), t.copy())

    @classmethod
    def from_matrix4(cls, T):
        T = np.asarray(T)
        return cls.from_matrix(T[:3, :3], T[:3, 3])

    @property
    def rotation(self):
        return quat_to_matrix(self.quat)

    def matrix4(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points):
        return np.asarray(points) @ self.rotation.T + self.translation

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first."""
        R = self.rotation @ other.rotation
        return RigidTransform.from_matrix(R, self.rotation @ other.translation + self.translation)

    def inverse(self):
        Rt = self.rotation.T
        return RigidTransform.from_matrix(Rt, -Rt @ self.translation)

    def to_dict(self):
        return {"quat": [float(v) for v in self.quat],
                "translation": [float(v) for v in self.translation]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["quat"], dtype=float), np.array(d["translation"], dtype=float))

    def __eq__(self, other):
        return (isinstance(other, RigidTransform)
                and np.array_equal(self.quat, other.quat)
                and np.array_equal(self.translation, other.translation))

    __hash__ = None
