# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the batched rotation/rigid-motion kernels.

Same contracts as _numpy_backend; plain C loops avoid per-call numpy
dispatch overhead on the small batches the filters and the optimizer
feed through here.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, sin, sqrt

cnp.import_array()

BACKEND_NAME = "native"

cdef double SMALL_ANGLE = 1e-4


def quat_mul(cnp.ndarray[cnp.float64_t, ndim=2] a,
             cnp.ndarray[cnp.float64_t, ndim=2] b):
    # term order matches _numpy_backend: canceling pairs of conj(q)*q are
    # adjacent, so that product is the exact identity in floating point
    cdef Py_ssize_t n = a.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, 4))
    cdef double aw, ax, ay, az, bw, bx, by, bz
    for i in range(n):
        aw = a[i, 0]; ax = a[i, 1]; ay = a[i, 2]; az = a[i, 3]
        bw = b[i, 0]; bx = b[i, 1]; by = b[i, 2]; bz = b[i, 3]
        out[i, 0] = aw * bw - ax * bx - ay * by - az * bz
        out[i, 1] = aw * bx + ax * bw + ay * bz - az * by
        out[i, 2] = aw * by + ay * bw + az * bx - ax * bz
        out[i, 3] = aw * bz + az * bw + ax * by - ay * bx
    return out


def quat_conj(cnp.ndarray[cnp.float64_t, ndim=2] q):
    cdef Py_ssize_t n = q.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, 4))
    for i in range(n):
        out[i, 0] = q[i, 0]
        out[i, 1] = -q[i, 1]
        out[i, 2] = -q[i, 2]
        out[i, 3] = -q[i, 3]
    return out


def quat_normalize(cnp.ndarray[cnp.float64_t, ndim=2] q):
    cdef Py_ssize_t n = q.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, 4))
    cdef double s
    for i in range(n):
        s = sqrt(q[i, 0] * q[i, 0] + q[i, 1] * q[i, 1]
                 + q[i, 2] * q[i, 2] + q[i, 3] * q[i, 3])
        out[i, 0] = q[i, 0] / s
        out[i, 1] = q[i, 1] / s
        out[i, 2] = q[i, 2] / s
        out[i, 3] = q[i, 3] / s
    return out


def quat_rotate(cnp.ndarray[cnp.float64_t, ndim=2] q,
                cnp.ndarray[cnp.float64_t, ndim=2] v):
    cdef Py_ssize_t n = q.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, 3))
    cdef double w, x, y, z, vx, vy, vz, tx, ty, tz
    for i in range(n):
        w = q[i, 0]; x = q[i, 1]; y = q[i, 2]; z = q[i, 3]
        vx = v[i, 0]; vy = v[i, 1]; vz = v[i, 2]
        tx = 2.0 * (y * vz - z * vy)
        ty = 2.0 * (z * vx - x * vz)
        tz = 2.0 * (x * vy - y * vx)
        out[i, 0] = vx + w * tx + (y * tz - z * ty)
        out[i, 1] = vy + w * ty + (z * tx - x * tz)
        out[i, 2] = vz + w * tz + (x * ty - y * tx)
    return out


def quat_to_matrix(cnp.ndarray[cnp.float64_t, ndim=2] q):
    cdef Py_ssize_t n = q.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=3] m = np.empty((n, 3, 3))
    cdef double w, x, y, z
    for i in range(n):
        w = q[i, 0]; x = q[i, 1]; y = q[i, 2]; z = q[i, 3]
        m[i, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
        m[i, 0, 1] = 2.0 * (x * y - w * z)
        m[i, 0, 2] = 2.0 * (x * z + w * y)
        m[i, 1, 0] = 2.0 * (x * y + w * z)
        m[i, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
        m[i, 1, 2] = 2.0 * (y * z - w * x)
        m[i, 2, 0] = 2.0 * (x * z - w * y)
        m[i, 2, 1] = 2.0 * (y * z + w * x)
        m[i, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return m


cdef inline double _sinc_half(double theta):
    # sin(theta/2)/theta with Taylor below the cutoff
    cdef double t2 = theta * theta
    if theta < SMALL_ANGLE:
        return 0.5 - t2 / 48.0 + t2 * t2 / 3840.0
    return sin(0.5 * theta) / theta


def so3_exp(cnp.ndarray[cnp.float64_t, ndim=2] phi):
    cdef Py_ssize_t n = phi.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q = np.empty((n, 4))
    cdef double px, py, pz, theta, s
    for i in range(n):
        px = phi[i, 0]; py = phi[i, 1]; pz = phi[i, 2]
        theta = sqrt(px * px + py * py + pz * pz)
        s = _sinc_half(theta)
        q[i, 0] = cos(0.5 * theta)
        q[i, 1] = px * s
        q[i, 2] = py * s
        q[i, 3] = pz * s
    return q


def so3_log(cnp.ndarray[cnp.float64_t, ndim=2] q):
    cdef Py_ssize_t n = q.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=2] phi = np.empty((n, 3))
    cdef double w, x, y, z, vn, scale
    for i in range(n):
        w = q[i, 0]; x = q[i, 1]; y = q[i, 2]; z = q[i, 3]
        if w < 0.0:
            w = -w; x = -x; y = -y; z = -z
        vn = sqrt(x * x + y * y + z * z)
        if vn < SMALL_ANGLE:
            if w == 0.0:
                scale = 2.0
            else:
                scale = 2.0 / w * (1.0 - vn * vn / (3.0 * w * w))
        else:
            scale = 2.0 * atan2(vn, w) / vn
        phi[i, 0] = x * scale
        phi[i, 1] = y * scale
        phi[i, 2] = z * scale
    return phi


cdef inline void _v_apply(double px, double py, double pz, double theta,
                          double rx, double ry, double rz,
                          double sign, double* ox, double* oy, double* oz):
    # out = (I + sign*a*Phi + b*Phi^2) r  with {a,b} the V(phi) coefficients;
    # sign=-1 is only used for the Vinv first-order term, see _vinv_apply.
    cdef double t2 = theta * theta
    cdef double a, b, hs
    if theta < SMALL_ANGLE:
        a = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        b = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        hs = sin(0.5 * theta)
        a = 2.0 * hs * hs / t2
        b = (theta - sin(theta)) / (t2 * theta)
    a = a * sign
    # cross products: c = phi x r ; d = phi x c
    cdef double cx = py * rz - pz * ry
    cdef double cy = pz * rx - px * rz
    cdef double cz = px * ry - py * rx
    cdef double dx = py * cz - pz * cy
    cdef double dy = pz * cx - px * cz
    cdef double dz = px * cy - py * cx
    ox[0] = rx + a * cx + b * dx
    oy[0] = ry + a * cy + b * dy
    oz[0] = rz + a * cz + b * dz


def se3_exp(cnp.ndarray[cnp.float64_t, ndim=2] xi):
    cdef Py_ssize_t n = xi.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q = np.empty((n, 4))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] t = np.empty((n, 3))
    cdef double px, py, pz, theta, s, ox, oy, oz
    for i in range(n):
        px = xi[i, 3]; py = xi[i, 4]; pz = xi[i, 5]
        theta = sqrt(px * px + py * py + pz * pz)
        s = _sinc_half(theta)
        q[i, 0] = cos(0.5 * theta)
        q[i, 1] = px * s
        q[i, 2] = py * s
        q[i, 3] = pz * s
        _v_apply(px, py, pz, theta, xi[i, 0], xi[i, 1], xi[i, 2],
                 1.0, &ox, &oy, &oz)
        t[i, 0] = ox; t[i, 1] = oy; t[i, 2] = oz
    return q, t


cdef inline void _vinv_apply(double px, double py, double pz, double theta,
                             double rx, double ry, double rz,
                             double* ox, double* oy, double* oz):
    # out = (I - Phi/2 + c*Phi^2) r
    cdef double t2 = theta * theta
    cdef double c, half, ct
    if theta < SMALL_ANGLE:
        c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        half = 0.5 * theta
        ct = half * cos(half) / sin(half)
        c = (1.0 - ct) / t2
    cdef double cx = py * rz - pz * ry
    cdef double cy = pz * rx - px * rz
    cdef double cz = px * ry - py * rx
    cdef double dx = py * cz - pz * cy
    cdef double dy = pz * cx - px * cz
    cdef double dz = px * cy - py * cx
    ox[0] = rx - 0.5 * cx + c * dx
    oy[0] = ry - 0.5 * cy + c * dy
    oz[0] = rz - 0.5 * cz + c * dz


def se3_log(cnp.ndarray[cnp.float64_t, ndim=2] q,
            cnp.ndarray[cnp.float64_t, ndim=2] t):
    cdef Py_ssize_t n = q.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xi = np.empty((n, 6))
    cdef double w, x, y, z, vn, scale, px, py, pz, theta, ox, oy, oz
    for i in range(n):
        w = q[i, 0]; x = q[i, 1]; y = q[i, 2]; z = q[i, 3]
        if w < 0.0:
            w = -w; x = -x; y = -y; z = -z
        vn = sqrt(x * x + y * y + z * z)
        if vn < SMALL_ANGLE:
            if w == 0.0:
                scale = 2.0
            else:
                scale = 2.0 / w * (1.0 - vn * vn / (3.0 * w * w))
        else:
            scale = 2.0 * atan2(vn, w) / vn
        px = x * scale; py = y * scale; pz = z * scale
        theta = sqrt(px * px + py * py + pz * pz)
        _vinv_apply(px, py, pz, theta, t[i, 0], t[i, 1], t[i, 2],
                    &ox, &oy, &oz)
        xi[i, 0] = ox; xi[i, 1] = oy; xi[i, 2] = oz
        xi[i, 3] = px; xi[i, 4] = py; xi[i, 5] = pz
    return xi
