"""Shared generators and oracles for the test suite."""

import math

import numpy as np

from trajfuse.se3 import Pose, Rotation, Twist, compose, exp_so3, \
    rotation_angle_between


def random_rotation(rng):
    q = rng.normal(size=4)
    return Rotation(q)


def random_pose(rng, trans_scale=1.0):
    return Pose(random_rotation(rng), rng.normal(size=3) * trans_scale)


def random_twist(rng, max_angle=np.pi - 1e-2, rho_scale=1.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    return Twist(rng.normal(size=3) * rho_scale, axis * angle)


def twist_hat(xi):
    """4x4 Lie-algebra matrix of a twist vector [rho, phi]."""
    rho, phi = xi[:3], xi[3:]
    m = np.zeros((4, 4))
    m[:3, :3] = np.array([
        [0.0, -phi[2], phi[1]],
        [phi[2], 0.0, -phi[0]],
        [-phi[1], phi[0], 0.0],
    ])
    m[:3, 3] = rho
    return m


def expm_oracle(xi):
    """Independent SE(3) exponential: scipy scaling-and-squaring on 4x4."""
    from scipy.linalg import expm

    return expm(twist_hat(np.asarray(xi, dtype=float)))


def pose_error(a, b):
    """(rotation angle rad, translation distance m) between two poses."""
    from trajfuse.se3 import rotation_angle_between, translation_distance

    return (rotation_angle_between(a.rotation, b.rotation),
            translation_distance(a, b))


def assert_pose_close(a, b, rot_tol, trans_tol):
    rot, trans = pose_error(a, b)
    assert rot <= rot_tol, f"rotation error {rot} > {rot_tol}"
    assert trans <= trans_tol, f"translation error {trans} > {trans_tol}"


# --- constant-velocity simulation for smoother checks ----------------------

def cv_truth(n, dt, p0, q0, v, w):
    """Exact constant-velocity trajectory (no process noise)."""
    poses = []
    p = np.asarray(p0, dtype=float).copy()
    q = q0
    step = exp_so3(np.asarray(w) * dt)
    for _ in range(n):
        poses.append(Pose(q, p.copy()))
        p = p + np.asarray(v) * dt
        q = compose(Pose(q, np.zeros(3)),
                    Pose(step, np.zeros(3))).rotation
    return poses


def noisy_measurements(rng, poses, sigma_t, sigma_r):
    out = []
    for k, pose in enumerate(poses):
        zp = pose.translation + rng.normal(scale=sigma_t, size=3)
        zq = compose(pose, Pose(exp_so3(rng.normal(scale=sigma_r, size=3)),
                                np.zeros(3)))
        out.append((k, Pose(zq.rotation, zp)))
    return out


def matched_cv_truth(rng, n, noise):
    """Truth simulated from the filter's exact discrete noise model."""
    def chol2(density, dt):
        q = np.array([[density * dt**3 / 3, density * dt**2 / 2],
                      [density * dt**2 / 2, density * dt]])
        return np.linalg.cholesky(q)

    lt = chol2(noise.q_accel, noise.dt)
    lr = chol2(noise.q_alpha, noise.dt)
    p = rng.normal(scale=0.3, size=3)
    q = Rotation(rng.normal(size=4))
    v = rng.uniform(-0.2, 0.2, size=3)
    w = rng.uniform(-0.5, 0.5, size=3)
    poses, vels, rates = [], [], []
    for _ in range(n):
        poses.append(Pose(q, p.copy()))
        vels.append(v.copy())
        rates.append(w.copy())
        nt = lt @ rng.normal(size=(2, 3))
        nr = lr @ rng.normal(size=(2, 3))
        p = p + v * noise.dt + nt[0]
        v = v + nt[1]
        q = compose(Pose(q, np.zeros(3)),
                    Pose(exp_so3(w * noise.dt + nr[0]),
                         np.zeros(3))).rotation
        w = w + nr[1]
    return poses, vels, rates


def trans_rmse(est_poses, ref_poses):
    err = [np.linalg.norm(a.translation - b.translation)
           for a, b in zip(est_poses, ref_poses)]
    return math.sqrt(np.mean(np.square(err)))


def rot_rmse(est_poses, ref_poses):
    err = [rotation_angle_between(a.rotation, b.rotation)
           for a, b in zip(est_poses, ref_poses)]
    return math.sqrt(np.mean(np.square(err)))


def rot_error_vec(est, true):
    """Error-state rotation coordinate: true = est x exp(e)."""
    from trajfuse.se3 import log_so3

    rel = compose(Pose(est, np.zeros(3)).inverse(),
                  Pose(true, np.zeros(3)))
    return log_so3(rel.rotation)


def run_nees(runs=50, frames=120, seed=35):
    """Average filter and smoother NEES over matched Monte-Carlo runs."""
    from trajfuse.smoother import NoiseConfig, ekf_forward, rts_backward

    rng = np.random.default_rng(seed)
    noise = NoiseConfig(sigma_meas_trans=0.005,
                        sigma_meas_rot=math.radians(1),
                        q_accel=0.05, q_alpha=0.05, dt=1.0 / 15.0)
    filt_nees, smoothed_nees = [], []
    for _ in range(runs):
        poses, vels, rates = matched_cv_truth(rng, frames, noise)
        meas = noisy_measurements(rng, poses, noise.sigma_meas_trans,
                                  noise.sigma_meas_rot)
        fwd = ekf_forward(meas, noise)
        sm = rts_backward(fwd)
        for k in range(frames):
            for state, sink in ((fwd.steps[k][1], filt_nees),
                                (sm.states[k], smoothed_nees)):
                err = np.concatenate([
                    poses[k].translation - state.p,
                    rot_error_vec(state.q, poses[k].rotation),
                    vels[k] - state.v,
                    rates[k] - state.w,
                ])
                sink.append(err @ np.linalg.solve(state.cov, err))
    return np.mean(filt_nees), np.mean(smoothed_nees)
