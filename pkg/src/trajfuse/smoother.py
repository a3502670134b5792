"""Global constant-velocity EKF with RTS backward smoothing over pose
measurements.

State is the nominal [p, q, v, w] with a 12-dim error state ordered
[dp, dtheta, dv, dw]; rotation corrections are injected by quaternion
right-multiplication. Velocity and angular rate are initialized by
two-point differencing of the first two measurements (with the matching
initial covariance), so the filter tracks an exact constant-velocity
sequence with zero transient. The second measurement is consumed by that
initialization and carries no further information, so no update is run at
its frame. Frames without a measurement are bridged by prediction only.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InsufficientDataError, NumericalError, ValidationError
from .se3 import Pose, Rotation

PSD_TOLERANCE = -1e-9


@dataclass
class NoiseConfig:
    """Process/measurement noise of the constant-velocity model."""

    sigma_meas_trans: float = 0.005          # m
    sigma_meas_rot: float = math.radians(1)  # rad
    q_accel: float = 0.5                     # (m/s^2)^2/Hz white accel
    q_alpha: float = 0.5                     # (rad/s^2)^2/Hz white ang accel
    dt: float = 1.0 / 15.0                   # s per frame

    def __post_init__(self):
        for name in ("sigma_meas_trans", "sigma_meas_rot",
                     "q_accel", "q_alpha", "dt"):
            if not getattr(self, name) > 0.0:
                raise ValidationError(f"NoiseConfig.{name} must be positive")


@dataclass
class FilterState:
    p: np.ndarray
    q: Rotation
    v: np.ndarray
    w: np.ndarray
    cov: np.ndarray  # 12x12, ordered [dp, dtheta, dv, dw]

    def pose(self):
        return Pose(self.q, self.p)


@dataclass
class ForwardPass:
    """EKF forward output: per-frame (predicted, updated) state pairs."""

    frame_indices: list
    steps: list            # list of (FilterState, FilterState)
    measured: list         # bool per frame
    transitions: list      # F used for the step k -> k+1 (last entry None)
    noise: NoiseConfig


@dataclass
class SmoothedTrajectory:
    """RTS output: (frame_index, Pose, covariance) plus gap flags.

    `states` retains the full smoothed FilterStates (incl. velocities) for
    consistency checks; the frames list is the pose-level product.
    """

    frames: list
    gap_mask: np.ndarray = field(default=None)
    states: list = field(default=None)

    def __post_init__(self):
        idx = [f[0] for f in self.frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValidationError("frame indices must be strictly increasing")
        if self.gap_mask is None:
            self.gap_mask = np.zeros(len(self.frames), dtype=bool)

    def frame_indices(self):
        return [f[0] for f in self.frames]

    def poses(self):
        return [f[1] for f in self.frames]

    def covariances(self):
        return [f[2] for f in self.frames]


def _quat_of(rotation):
    return rotation.q


def _rot_exp(phi):
    return kernels.so3_exp(np.asarray(phi, dtype=float)[None, :])[0]


def _rot_log(q):
    return kernels.so3_log(np.asarray(q, dtype=float)[None, :])[0]


def _qmul(a, b):
    return kernels.quat_mul(a[None, :], b[None, :])[0]


def _qconj(q):
    return kernels.quat_conj(q[None, :])[0]


def _check_psd(cov, frame):
    if np.abs(cov - cov.T).max() > 1e-10:
        raise NumericalError(f"covariance asymmetric at frame {frame}")
    if np.linalg.eigvalsh(cov)[0] < PSD_TOLERANCE:
        raise NumericalError(f"covariance lost PSD at frame {frame}")


def _inject(p, q, v, w, delta):
    p = p + delta[0:3]
    q = _qmul(q, _rot_exp(delta[3:6]))
    q /= np.linalg.norm(q)
    v = v + delta[6:9]
    w = w + delta[9:12]
    return p, q, v, w


def _process_noise(noise, dt):
    q = np.zeros((12, 12))
    for base, density in ((0, noise.q_accel), (3, noise.q_alpha)):
        pos, vel = base, base + 6
        a = density * dt ** 3 / 3.0
        b = density * dt ** 2 / 2.0
        c = density * dt
        for k in range(3):
            q[pos + k, pos + k] = a
            q[pos + k, vel + k] = b
            q[vel + k, pos + k] = b
            q[vel + k, vel + k] = c
    return q


def _transition(w, dt):
    f = np.eye(12)
    f[0:3, 6:9] = dt * np.eye(3)
    f[3:6, 9:12] = dt * np.eye(3)
    # dtheta propagates through the rotation increment of the step
    f[3:6, 3:6] = kernels.quat_to_matrix(_rot_exp(w * dt)[None, :])[0].T
    return f


def _validate_measurements(measurements):
    if len(measurements) < 2:
        raise InsufficientDataError("need at least 2 pose measurements")
    idx = [int(f) for f, _ in measurements]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValidationError("measurement frames must be strictly increasing")
    return idx


def ekf_forward(measurements, noise):
    """Forward EKF pass; returns per-frame (predicted, updated) states."""
    idx = _validate_measurements(measurements)
    dt = noise.dt
    st2 = noise.sigma_meas_trans ** 2
    sr2 = noise.sigma_meas_rot ** 2

    by_frame = {int(f): pose for f, pose in measurements}
    first, second, last = idx[0], idx[1], idx[-1]

    # Two-point differencing initialization at the first frame.
    z0, z1 = by_frame[first], by_frame[second]
    q0 = _quat_of(z0.rotation).copy()
    q1 = _quat_of(z1.rotation).copy()
    if float(np.dot(q0, q1)) < 0.0:
        q1 = -q1
    span = (second - first) * dt
    p = z0.translation.copy()
    q = q0
    v = (z1.translation - z0.translation) / span
    w = _rot_log(_qmul(_qconj(q0), q1)) / span

    cov = np.zeros((12, 12))
    for base, s2, dens in ((0, st2, noise.q_accel), (3, sr2, noise.q_alpha)):
        pos, vel = base, base + 6
        for k in range(3):
            cov[pos + k, pos + k] = s2
            cov[pos + k, vel + k] = -s2 / span
            cov[vel + k, pos + k] = -s2 / span
            cov[vel + k, vel + k] = 2.0 * s2 / span ** 2 + dens * span / 3.0

    h = np.zeros((6, 12))
    h[0:3, 0:3] = np.eye(3)
    h[3:6, 3:6] = np.eye(3)
    r_meas = np.diag([st2] * 3 + [sr2] * 3)
    eye12 = np.eye(12)

    frame_indices = []
    steps = []
    measured = []
    transitions = []

    state0 = FilterState(p.copy(), Rotation(q), v.copy(), w.copy(), cov.copy())
    frame_indices.append(first)
    steps.append((state0, state0))
    measured.append(True)

    prev_q = q
    for frame in range(first + 1, last + 1):
        f_mat = _transition(w, dt)
        transitions.append(f_mat)

        p = p + v * dt
        q = _qmul(q, _rot_exp(w * dt))
        q /= np.linalg.norm(q)
        cov = f_mat @ cov @ f_mat.T + _process_noise(noise, dt)
        cov = 0.5 * (cov + cov.T)

        pred = FilterState(p.copy(), Rotation(q), v.copy(), w.copy(),
                           cov.copy())

        z = by_frame.get(frame)
        has_meas = z is not None
        if has_meas and frame != second:
            zq = _quat_of(z.rotation).copy()
            if float(np.dot(q, zq)) < 0.0:
                zq = -zq
            innov = np.concatenate([
                z.translation - p,
                _rot_log(_qmul(_qconj(q), zq)),
            ])
            s = h @ cov @ h.T + r_meas
            gain = np.linalg.solve(s, h @ cov).T
            p, q, v, w = _inject(p, q, v, w, gain @ innov)
            ikh = eye12 - gain @ h
            cov = ikh @ cov @ ikh.T + gain @ r_meas @ gain.T
            cov = 0.5 * (cov + cov.T)

        if float(np.dot(q, prev_q)) < 0.0:
            q = -q
        prev_q = q

        _check_psd(cov, frame)
        upd = FilterState(p.copy(), Rotation(q), v.copy(), w.copy(),
                          cov.copy())
        frame_indices.append(frame)
        steps.append((pred, upd))
        measured.append(has_meas)

    transitions.append(None)
    return ForwardPass(frame_indices, steps, measured, transitions, noise)


def _error_between(ref, state):
    """Error-state coordinates of `state` relative to `ref`."""
    dq = _rot_log(_qmul(_qconj(_quat_of(ref.q)), _quat_of(state.q)))
    return np.concatenate([
        state.p - ref.p, dq, state.v - ref.v, state.w - ref.w,
    ])


def _solve_smoother_gain(pred_cov, f_mat, upd_cov, frame):
    rhs = f_mat @ upd_cov
    try:
        return np.linalg.solve(pred_cov, rhs).T
    except np.linalg.LinAlgError:
        warnings.warn(
            f"singular predicted covariance at frame {frame}; regularizing")
        try:
            return np.linalg.solve(pred_cov + 1e-12 * np.eye(12), rhs).T
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"predicted covariance singular at frame {frame}") from exc


def rts_backward(forward):
    """RTS backward pass over an EKF forward result."""
    steps = forward.steps
    n = len(steps)
    smoothed_states = [None] * n
    smoothed_states[-1] = steps[-1][1]

    for k in range(n - 2, -1, -1):
        pred_next, _ = steps[k + 1]
        upd = steps[k][1]
        f_mat = forward.transitions[k]
        gain = _solve_smoother_gain(pred_next.cov, f_mat, upd.cov,
                                    forward.frame_indices[k])
        dx = _error_between(pred_next, smoothed_states[k + 1])
        p, q, v, w = _inject(upd.p, _quat_of(upd.q), upd.v, upd.w, gain @ dx)
        cov = upd.cov + gain @ (smoothed_states[k + 1].cov
                                - pred_next.cov) @ gain.T
        cov = 0.5 * (cov + cov.T)
        _check_psd(cov, forward.frame_indices[k])
        if float(np.dot(q, _quat_of(upd.q))) < 0.0:
            q = -q
        smoothed_states[k] = FilterState(p, Rotation(q), v, w, cov)

    frames = [
        (idx, st.pose(), st.cov)
        for idx, st in zip(forward.frame_indices, smoothed_states)
    ]
    gap_mask = ~np.asarray(forward.measured, dtype=bool)
    return SmoothedTrajectory(frames, gap_mask, smoothed_states)


def smooth(measurements, noise=None):
    """EKF forward then RTS backward over absolute pose measurements."""
    if noise is None:
        noise = NoiseConfig()
    return rts_backward(ekf_forward(measurements, noise))
