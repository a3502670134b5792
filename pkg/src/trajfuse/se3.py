"""SO(3)/SE(3) types and group operations.

Conventions used package-wide:

* Quaternions are stored (w, x, y, z) and renormalized on construction.
* A Pose maps object-local coordinates to camera coordinates:
  x_cam = R x_obj + t.
* compose(a, b) applies b first, then a: the result maps x -> a(b(x)).
* Twist vectors are ordered [rho, phi]: translational part first,
  axis-angle rotational part second.
"""

import numpy as np

from . import kernels
from .errors import ValidationError


def _as_vec(value, size, name):
    arr = np.array(value, dtype=float).reshape(-1)
    if arr.shape != (size,):
        raise ValidationError(f"{name} must have {size} components")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    return arr


class Rotation:
    """Unit quaternion; q and -q represent the same rotation."""

    __slots__ = ("q",)

    def __init__(self, q):
        q = _as_vec(q, 4, "quaternion")
        n2 = float(q @ q)
        if n2 < 1e-16:
            raise ValidationError("quaternion norm too small to normalize")
        # renormalize only on real drift: dividing an already-unit
        # quaternion by 1 +- 1ulp would shuffle last-bit rounding and break
        # exact cancellation in conj(q) * q
        if abs(n2 - 1.0) > 1e-12:
            q = q / np.sqrt(n2)
        self.q = q

    @classmethod
    def identity(cls):
        return cls((1.0, 0.0, 0.0, 0.0))

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValidationError("rotation matrix must be 3x3")
        # Shepperd's method: branch on the largest of trace and diagonal
        # entries, which stays well conditioned near 180 degree rotations.
        tr = np.trace(m)
        if tr > max(m[0, 0], m[1, 1], m[2, 2]):
            s = 2.0 * np.sqrt(max(tr + 1.0, 0.0))
            q = (0.25 * s, (m[2, 1] - m[1, 2]) / s,
                 (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * np.sqrt(max(1.0 + m[0, 0] - m[1, 1] - m[2, 2], 0.0))
            q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s,
                 (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * np.sqrt(max(1.0 + m[1, 1] - m[0, 0] - m[2, 2], 0.0))
            q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        else:
            s = 2.0 * np.sqrt(max(1.0 + m[2, 2] - m[0, 0] - m[1, 1], 0.0))
            q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                 (m[1, 2] + m[2, 1]) / s, 0.25 * s)
        return cls(q)

    def matrix(self):
        return kernels.quat_to_matrix(self.q[None, :])[0]

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            return kernels.quat_rotate(self.q[None, :], points[None, :])[0]
        q = np.broadcast_to(self.q, (points.shape[0], 4))
        return kernels.quat_rotate(np.ascontiguousarray(q), points)

    def inverse(self):
        return Rotation(kernels.quat_conj(self.q[None, :])[0])

    def __repr__(self):
        return f"Rotation(q={self.q.tolist()})"


class Pose:
    """Rigid transform: rotation plus translation in meters."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation):
        if not isinstance(rotation, Rotation):
            rotation = Rotation(rotation)
        self.rotation = rotation
        self.translation = _as_vec(translation, 3, "translation")

    @classmethod
    def identity(cls):
        return cls(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValidationError("pose matrix must be 4x4")
        return cls(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix()
        m[:3, 3] = self.translation
        return m

    def apply(self, points):
        return self.rotation.apply(points) + self.translation

    def inverse(self):
        return inverse(self)

    def __repr__(self):
        return (f"Pose(q={self.rotation.q.tolist()}, "
                f"t={self.translation.tolist()})")


class Twist:
    """Element of the SE(3) tangent space: [rho (m), phi (rad)]."""

    __slots__ = ("rho", "phi")

    def __init__(self, rho, phi):
        self.rho = _as_vec(rho, 3, "rho")
        self.phi = _as_vec(phi, 3, "phi")

    @classmethod
    def from_vector(cls, xi):
        xi = _as_vec(xi, 6, "twist")
        return cls(xi[:3], xi[3:])

    def vector(self):
        return np.concatenate([self.rho, self.phi])

    def __repr__(self):
        return f"Twist(rho={self.rho.tolist()}, phi={self.phi.tolist()})"


def exp_so3(phi):
    """Axis-angle vector -> Rotation."""
    phi = _as_vec(phi, 3, "phi")
    return Rotation(kernels.so3_exp(phi[None, :])[0])


def log_so3(rotation):
    """Rotation -> axis-angle vector with angle in [0, pi]."""
    return kernels.so3_log(rotation.q[None, :])[0]


def exp_se3(xi):
    """Twist -> Pose (closed-form Rodrigues plus translation Jacobian)."""
    if not isinstance(xi, Twist):
        xi = Twist.from_vector(xi)
    q, t = kernels.se3_exp(xi.vector()[None, :])
    return Pose(Rotation(q[0]), t[0])


def log_se3(pose):
    """Pose -> Twist, principal branch (rotation angle in [0, pi]).

    At exactly pi the axis sign is conventional: the returned phi has its
    first nonzero component positive (inherited from the w >= 0 quaternion
    hemisphere choice).
    """
    xi = kernels.se3_log(pose.rotation.q[None, :],
                         pose.translation[None, :])[0]
    return Twist(xi[:3], xi[3:])


def compose(a, b):
    """Pose composition a after b: maps x -> a(b(x))."""
    q = kernels.quat_mul(a.rotation.q[None, :], b.rotation.q[None, :])[0]
    t = a.rotation.apply(b.translation) + a.translation
    return Pose(Rotation(q), t)


def inverse(a):
    """Group inverse: compose(a, inverse(a)) is the identity."""
    qc = kernels.quat_conj(a.rotation.q[None, :])
    t = -kernels.quat_rotate(qc, a.translation[None, :])[0]
    return Pose(Rotation(qc[0]), t)


def rotation_angle_between(a, b):
    """Geodesic distance on SO(3)/±, in [0, pi] radians.

    Angle of the relative quaternion via atan2, which keeps full precision
    near zero where arccos of the scalar part would lose half the digits.
    """
    rel = kernels.quat_mul(kernels.quat_conj(a.q[None, :]), b.q[None, :])[0]
    return 2.0 * float(np.arctan2(np.linalg.norm(rel[1:]), abs(rel[0])))


def translation_distance(a, b):
    """Euclidean distance between two pose translations, meters."""
    return float(np.linalg.norm(a.translation - b.translation))


def skew(v):
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])
