"""Pure-numpy implementation of the batched rotation/rigid-motion kernels.

All functions accept float64 arrays with a leading batch axis:
quaternions are (N, 4) in (w, x, y, z) order, vectors (N, 3), twists
(N, 6) ordered [rho, phi] (translation part first, rotation part second,
phi an axis-angle vector in radians).

Small-angle branches use cancellation-free forms where one exists
(1 - cos t == 2 sin^2(t/2)) and Taylor series below SMALL_ANGLE for the
coefficients that genuinely cancel; this keeps exp/log round-trips at
~1e-13 across the whole principal domain.
"""

import numpy as np

BACKEND_NAME = "numpy"

# Switch point for Taylor branches of the cancelling series coefficients.
SMALL_ANGLE = 1e-4


def quat_mul(a, b):
    """Hamilton product of quaternion batches, (N,4) x (N,4) -> (N,4).

    Terms are ordered so the canceling pairs of conj(q) * q are adjacent,
    which makes that product the exact identity in floating point.
    """
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by + ay * bw + az * bx - ax * bz,
            aw * bz + az * bw + ax * by - ay * bx,
        ],
        axis=-1,
    )


def quat_conj(q):
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_normalize(q):
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    return q / norm


def quat_rotate(q, v):
    """Rotate vector batch v by quaternion batch q."""
    qv = q[..., 1:]
    t = 2.0 * np.cross(qv, v)
    return v + q[..., :1] * t + np.cross(qv, t)


def quat_to_matrix(q):
    """Quaternion batch -> rotation matrix batch (N,3,3)."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def so3_exp(phi):
    """Axis-angle vector batch (N,3) -> unit quaternion batch (N,4)."""
    theta = np.linalg.norm(phi, axis=-1)
    half = 0.5 * theta
    small = theta < SMALL_ANGLE
    # sin(theta/2)/theta, Taylor 1/2 - theta^2/48 + theta^4/3840 below cutoff
    t2 = theta * theta
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(small, 0.5 - t2 / 48.0 + t2 * t2 / 3840.0,
                     np.sin(half) / np.where(small, 1.0, theta))
    q = np.empty(phi.shape[:-1] + (4,))
    q[..., 0] = np.cos(half)
    q[..., 1:] = phi * s[..., None]
    return q


def so3_log(q):
    """Unit quaternion batch -> axis-angle batch; result angle in [0, pi]."""
    q = np.where(q[..., :1] < 0.0, -q, q)
    n = np.linalg.norm(q[..., 1:], axis=-1)
    w = q[..., 0]
    small = n < SMALL_ANGLE
    theta = 2.0 * np.arctan2(n, w)
    with np.errstate(invalid="ignore", divide="ignore"):
        # theta/n, Taylor in n/w: 2/w * (1 - n^2/(3 w^2)) below cutoff
        scale = np.where(
            small,
            2.0 / np.where(w == 0.0, 1.0, w) * (1.0 - n * n / (3.0 * w * w)),
            theta / np.where(small, 1.0, n),
        )
    return q[..., 1:] * scale[..., None]


def _skew(v):
    m = np.zeros(v.shape[:-1] + (3, 3))
    m[..., 0, 1] = -v[..., 2]
    m[..., 0, 2] = v[..., 1]
    m[..., 1, 0] = v[..., 2]
    m[..., 1, 2] = -v[..., 0]
    m[..., 2, 0] = -v[..., 1]
    m[..., 2, 1] = v[..., 0]
    return m


def _v_coeffs(theta):
    """Coefficients a, b of V(phi) = I + a*Phi + b*Phi^2."""
    small = theta < SMALL_ANGLE
    t2 = theta * theta
    safe = np.where(small, 1.0, theta)
    half_sin = np.sin(0.5 * theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        # (1 - cos t)/t^2 == 2 sin^2(t/2)/t^2: no cancellation
        a = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                     2.0 * half_sin * half_sin / (safe * safe))
        b = np.where(small, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
                     (theta - np.sin(theta)) / (safe * safe * safe))
    return a, b


def _vinv_coeff(theta):
    """Coefficient c of V^{-1}(phi) = I - Phi/2 + c*Phi^2."""
    small = theta < SMALL_ANGLE
    t2 = theta * theta
    safe = np.where(small, 1.0, theta)
    half = 0.5 * theta
    with np.errstate(invalid="ignore", divide="ignore"):
        # (1 - (t/2) cot(t/2)) / t^2, stable up to pi
        cot_term = half * np.cos(half) / np.where(small, 1.0, np.sin(half))
        c = np.where(small, 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0,
                     (1.0 - cot_term) / (safe * safe))
    return c


def se3_exp(xi):
    """Twist batch (N,6) [rho, phi] -> (quaternion (N,4), translation (N,3))."""
    rho = xi[..., :3]
    phi = xi[..., 3:]
    theta = np.linalg.norm(phi, axis=-1)
    q = so3_exp(phi)
    a, b = _v_coeffs(theta)
    ph = _skew(phi)
    eye = np.broadcast_to(np.eye(3), ph.shape)
    v_mat = eye + a[..., None, None] * ph + b[..., None, None] * (ph @ ph)
    t = np.einsum("...ij,...j->...i", v_mat, rho)
    return q, t


def se3_log(q, t):
    """(quaternion, translation) batch -> twist batch (N,6) [rho, phi]."""
    phi = so3_log(q)
    theta = np.linalg.norm(phi, axis=-1)
    c = _vinv_coeff(theta)
    ph = _skew(phi)
    eye = np.broadcast_to(np.eye(3), ph.shape)
    vinv = eye - 0.5 * ph + c[..., None, None] * (ph @ ph)
    rho = np.einsum("...ij,...j->...i", vinv, t)
    return np.concatenate([rho, phi], axis=-1)
