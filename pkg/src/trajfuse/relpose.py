"""Relative object motion from tracked points.

2D tracks plus depth become 3D-3D correspondences; a RANSAC-wrapped
closed-form rigid fit (SVD, no scale) estimates the motion W of the object
points between the two camera frames: x_j = W x_i. The Gauss-Newton
information of the fit, J^T J / sigma^2 with per-point Jacobian
[I | -[W x_i]_x] (left perturbation, twist ordered [rho, phi]), weights
the resulting pose-graph edge.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientDataError,
    RegistrationError,
    ValidationError,
)
from .se3 import Pose, Rotation, compose, skew

DEPTH_MIN = 0.1   # m, below: sensor garbage
DEPTH_MAX = 5.0   # m, above: out of working range


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError("principal point must lie inside the image")


class TrackTable:
    """Per query point: observations (frame, u, v, visible)."""

    def __init__(self):
        self._obs = {}

    def add(self, point_id, frame, u, v, visible):
        self._obs.setdefault(int(point_id), {})[int(frame)] = (
            float(u), float(v), bool(visible))

    def point_ids(self):
        return sorted(self._obs)

    def observation(self, point_id, frame):
        return self._obs.get(int(point_id), {}).get(int(frame))

    def items(self):
        for pid in self.point_ids():
            yield pid, sorted(self._obs[pid].items())

    def __len__(self):
        return len(self._obs)


@dataclass
class CorrespondenceSet:
    """Paired 3D points (camera frames i and j) with validity weights."""

    pair: tuple
    points_i: np.ndarray
    points_j: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points_i = np.asarray(self.points_i, dtype=float).reshape(-1, 3)
        self.points_j = np.asarray(self.points_j, dtype=float).reshape(-1, 3)
        if self.points_i.shape != self.points_j.shape:
            raise ValidationError("point sets must have matching shapes")
        if self.weights is None:
            self.weights = np.ones(len(self.points_i))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(self.weights) != len(self.points_i):
            raise ValidationError("one weight per pair required")
        if np.any(self.points_i[:, 2] <= 0) or np.any(self.points_j[:, 2] <= 0):
            raise ValidationError("all correspondence depths must be positive")

    def __len__(self):
        return len(self.points_i)


@dataclass
class RelativePoseEstimate:
    """Object motion between two frames in camera coordinates: x_j = pose(x_i)."""

    pair: tuple
    pose: Pose
    inliers: np.ndarray
    information: np.ndarray

    def __post_init__(self):
        self.inliers = np.asarray(self.inliers, dtype=int)
        self.information = np.asarray(self.information, dtype=float)
        if len(self.inliers) < 3:
            raise ValidationError("a relative pose needs at least 3 inliers")
        if self.information.shape != (6, 6):
            raise ValidationError("information matrix must be 6x6")
        if np.abs(self.information - self.information.T).max() > 1e-8:
            raise ValidationError("information matrix must be symmetric")


@dataclass
class RansacConfig:
    iters: int = 500
    inlier_threshold_m: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.iters < 1 or self.inlier_threshold_m <= 0:
            raise ValidationError("invalid RANSAC configuration")


def _pixel_index(u, v, intrinsics):
    px, py = int(round(u)), int(round(v))
    if not (0 <= px < intrinsics.width and 0 <= py < intrinsics.height):
        return None
    return px, py


def _backproject_one(u, v, depth_map, mask, intrinsics):
    at = _pixel_index(u, v, intrinsics)
    if at is None:
        raise ValidationError(
            f"visible track point ({u:.1f},{v:.1f}) outside the image")
    px, py = at
    if mask is not None and not mask[py, px]:
        return None
    d = float(depth_map[py, px])
    if not (DEPTH_MIN < d < DEPTH_MAX):
        return None
    return np.array([(u - intrinsics.cx) / intrinsics.fx * d,
                     (v - intrinsics.cy) / intrinsics.fy * d,
                     d])


def backproject(tracks, depth_i, depth_j, mask_i, mask_j, intrinsics, pair):
    """3D-3D correspondences for the frame pair from tracks plus depth."""
    i, j = pair
    pts_i, pts_j = [], []
    for pid in tracks.point_ids():
        obs_i = tracks.observation(pid, i)
        obs_j = tracks.observation(pid, j)
        if obs_i is None or obs_j is None:
            continue
        if not (obs_i[2] and obs_j[2]):
            continue
        xi = _backproject_one(obs_i[0], obs_i[1], depth_i, mask_i, intrinsics)
        xj = _backproject_one(obs_j[0], obs_j[1], depth_j, mask_j, intrinsics)
        if xi is None or xj is None:
            continue
        pts_i.append(xi)
        pts_j.append(xj)
    if len(pts_i) < 3:
        raise InsufficientDataError(
            f"only {len(pts_i)} correspondences survive for pair {pair}")
    return CorrespondenceSet((i, j), np.array(pts_i), np.array(pts_j))


def _kabsch(a, b, weights=None):
    """Closed-form rigid fit: returns Pose W with b ~= W(a). No scale."""
    if weights is None:
        weights = np.ones(len(a))
    wsum = weights.sum()
    ca = (weights[:, None] * a).sum(axis=0) / wsum
    cb = (weights[:, None] * b).sum(axis=0) / wsum
    h = (weights[:, None] * (a - ca)).T @ (b - cb)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = cb - r @ ca
    return Pose(Rotation.from_matrix(r), t)


def _batched_kabsch(a, b):
    """Kabsch over sample batches: a, b are (S, 3, 3) minimal point triples."""
    ca = a.mean(axis=1, keepdims=True)
    cb = b.mean(axis=1, keepdims=True)
    h = np.einsum("ski,skj->sij", a - ca, b - cb)
    u, _, vt = np.linalg.svd(h)
    det = np.linalg.det(np.einsum("sij,skj->sik", vt.transpose(0, 2, 1),
                                  u))
    fix = np.tile(np.eye(3), (len(a), 1, 1))
    fix[:, 2, 2] = np.sign(det)
    r = np.einsum("sji,sjk,slk->sil", vt, fix, u)
    t = cb[:, 0, :] - np.einsum("sij,sj->si", r, ca[:, 0, :])
    return r, t


def _degenerate_samples(a):
    """Near-collinear point triples are useless minimal samples."""
    v1 = a[:, 1] - a[:, 0]
    v2 = a[:, 2] - a[:, 0]
    area = np.linalg.norm(np.cross(v1, v2), axis=1)
    scale = (np.linalg.norm(v1, axis=1) * np.linalg.norm(v2, axis=1)) + 1e-300
    return area / scale < 1e-6


def register(corr, ransac=None, sigma_point_m=0.005):
    """Robust rigid registration of a correspondence set.

    RANSAC over minimal 3-point samples with a closed-form SVD model,
    inliers by Euclidean residual, one weighted refit over all inliers.
    Deterministic for a fixed seed.
    """
    if ransac is None:
        ransac = RansacConfig()
    n = len(corr)
    if n < 3:
        raise InsufficientDataError("registration needs >= 3 correspondences")

    rng = np.random.default_rng(ransac.seed)
    a, b = corr.points_i, corr.points_j

    samples = rng.random((ransac.iters, n)).argsort(axis=1)[:, :3]
    # redraw degenerate (collinear) samples a bounded number of times
    for _ in range(10):
        bad = _degenerate_samples(a[samples])
        if not bad.any():
            break
        for s in np.flatnonzero(bad):
            samples[s] = rng.choice(n, size=3, replace=False)
    valid = ~_degenerate_samples(a[samples])
    if not valid.any():
        raise RegistrationError("all minimal samples degenerate (collinear)")

    r, t = _batched_kabsch(a[samples], b[samples])
    resid = np.linalg.norm(
        np.einsum("sij,nj->sni", r, a) + t[:, None, :] - b[None, :, :],
        axis=2)
    inlier_mask = resid < ransac.inlier_threshold_m
    counts = np.where(valid, inlier_mask.sum(axis=1), -1)
    mean_resid = np.where(inlier_mask, resid, 0.0).sum(axis=1) \
        / np.maximum(counts, 1)
    best = int(np.lexsort((np.arange(ransac.iters), mean_resid, -counts))[0])
    if counts[best] < 3:
        raise RegistrationError(
            f"no model with >= 3 inliers after {ransac.iters} iterations")

    inliers = np.flatnonzero(inlier_mask[best])
    pose = _kabsch(a[inliers], b[inliers], corr.weights[inliers])
    info = information_matrix_for(pose, a[inliers], corr.weights[inliers],
                                  sigma_point_m)
    return RelativePoseEstimate(corr.pair, pose, inliers, info)


def information_matrix_for(pose, points_i, weights, sigma_point_m):
    """Gauss-Newton information J^T W J / sigma^2 at the registration optimum."""
    transformed = pose.apply(points_i)
    omega = np.zeros((6, 6))
    for w, x in zip(weights, transformed):
        s = skew(x)
        omega[:3, :3] += w * np.eye(3)
        omega[:3, 3:] += w * (-s)
        omega[3:, :3] += w * s
        omega[3:, 3:] += w * (s.T @ s)
    omega /= sigma_point_m ** 2
    omega = 0.5 * (omega + omega.T)
    vals, vecs = np.linalg.eigh(omega)
    vals = np.clip(vals, 0.0, None)
    return vecs @ np.diag(vals) @ vecs.T


def information_matrix(est, corr, sigma_point_m=0.005):
    """Information of an estimate over its inlier correspondences."""
    if len(est.inliers) < 3:
        raise ValidationError("estimate must carry at least 3 inliers")
    return information_matrix_for(est.pose, corr.points_i[est.inliers],
                                  corr.weights[est.inliers], sigma_point_m)


def refine_gauss_newton(corr, initial, inliers=None, iters=30, tol=1e-14):
    """Iterative point-to-point refinement, left-perturbation updates.

    Second route of the dual check against the closed-form SVD solution.
    """
    from .se3 import Twist, exp_se3

    idx = np.arange(len(corr)) if inliers is None else np.asarray(inliers)
    a = corr.points_i[idx]
    b = corr.points_j[idx]
    w = corr.weights[idx]
    pose = initial
    for _ in range(iters):
        ta = pose.apply(a)
        r = ta - b
        jtj = np.zeros((6, 6))
        jtr = np.zeros(6)
        for wk, xk, rk in zip(w, ta, r):
            s = skew(xk)
            jtj[:3, :3] += wk * np.eye(3)
            jtj[:3, 3:] += wk * (-s)
            jtj[3:, :3] += wk * s
            jtj[3:, 3:] += wk * (s.T @ s)
            jtr[:3] += wk * rk
            jtr[3:] += wk * (-s.T @ rk)
        delta = np.linalg.solve(jtj, -jtr)
        pose = compose(exp_se3(Twist(delta[:3], delta[3:])), pose)
        if np.linalg.norm(delta) < tol:
            break
    return pose


class ChainGapError(ValidationError):
    """Relative chain is missing one or more consecutive pairs."""

    def __init__(self, frames):
        self.frames = frames
        super().__init__(f"missing relative pairs covering frames {frames}")


def chain_relative(anchor, estimates):
    """Integrate consecutive relative estimates from an anchored first frame.

    Uses the camera-frame relation T_j = W_ij o T_i; drift accumulates, as
    expected of the registration-only baseline.
    """
    if not estimates:
        raise InsufficientDataError("no relative estimates to chain")
    ordered = sorted(estimates, key=lambda e: e.pair)
    gaps = []
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.pair[0] != prev.pair[1]:
            gaps.extend(range(prev.pair[1], nxt.pair[0]))
    if gaps:
        raise ChainGapError(gaps)

    frame = ordered[0].pair[0]
    trajectory = [(frame, anchor)]
    current = anchor
    for est in ordered:
        current = compose(est.pose, current)
        trajectory.append((est.pair[1], current))
    return trajectory
