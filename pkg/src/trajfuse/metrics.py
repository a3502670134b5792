"""Trajectory and pose-accuracy metrics.

ATE/RPE follow the usual trajectory-benchmark definitions (object poses
already share the camera frame, so ATE runs without alignment by default).
ADD/ADD-S integrate the recall curve exactly over thresholds (0, 0.1 m];
the 0.1d recall counts frames within 10% of the model diameter.
Oriented-box 3D IoU clips convex polytopes exactly (Sutherland-Hodgman
against box half-spaces), no sampling.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import ValidationError
from .se3 import Rotation, compose, inverse, rotation_angle_between

ADD_AUC_MAX_M = 0.1           # AUC threshold range (0, 0.1 m]
ADD_BRUTE_FORCE_LIMIT = 2000  # points; above this use a KD-tree
DIAMETER_EXACT_LIMIT = 5000   # points; above this use hull vertices


@dataclass
class TrajectoryPair:
    """Frame-aligned estimate/reference pose lists."""

    estimate: list
    reference: list
    frame_indices: list = field(default=None)

    def __post_init__(self):
        if len(self.estimate) != len(self.reference):
            raise ValidationError("trajectories must have equal length")
        if len(self.estimate) < 2:
            raise ValidationError("need at least 2 frames to evaluate")
        if self.frame_indices is None:
            self.frame_indices = list(range(len(self.estimate)))
        if len(self.frame_indices) != len(self.estimate):
            raise ValidationError("frame indices must match trajectory length")

    def __len__(self):
        return len(self.estimate)


@dataclass
class ModelPoints:
    """Sampled CAD-model points in object-local coordinates, meters."""

    points: np.ndarray
    diameter: float = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(self.points) < 1:
            raise ValidationError("model must contain at least one point")
        if self.diameter is None:
            self.diameter = compute_diameter(self.points)
        if len(self.points) > 1 and not self.diameter > 0:
            raise ValidationError("model diameter must be positive")


def compute_diameter(points):
    """Maximum pairwise distance; hull-accelerated for large clouds."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 1:
        return 0.0
    if len(pts) > DIAMETER_EXACT_LIMIT:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass  # degenerate cloud: fall through to exact search
    best = 0.0
    # chunked exact pairwise max to bound memory
    for start in range(0, len(pts), 512):
        block = pts[start:start + 512]
        d = np.linalg.norm(block[:, None, :] - pts[None, :, :], axis=2)
        best = max(best, float(d.max()))
    return best


def _stats_mm(errors_m):
    e = np.asarray(errors_m, dtype=float) * 1000.0
    return {"mean": float(e.mean()), "median": float(np.median(e)),
            "max": float(e.max())}


def _stats_deg(errors_rad):
    e = np.degrees(np.asarray(errors_rad, dtype=float))
    return {"mean": float(e.mean()), "median": float(np.median(e)),
            "max": float(e.max())}


def align_translations(pair):
    """Single SE(3) (no scale) aligning estimate positions to reference."""
    a = np.array([p.translation for p in pair.estimate])
    b = np.array([p.translation for p in pair.reference])
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = cb - r @ ca
    return r, t


def ate(pair, align=False):
    """Absolute trajectory error statistics, millimeters."""
    est = np.array([p.translation for p in pair.estimate])
    ref = np.array([p.translation for p in pair.reference])
    if align:
        r, t = align_translations(pair)
        est = est @ r.T + t
    per_frame = np.linalg.norm(est - ref, axis=1)
    out = _stats_mm(per_frame)
    out["per_frame_mm"] = per_frame * 1000.0
    return out


def rpe(pair, delta=1):
    """Relative pose error over a frame offset: rotation and translation."""
    if delta < 1:
        raise ValidationError("rpe delta must be >= 1")
    n = len(pair)
    if delta >= n:
        raise ValidationError(f"rpe delta {delta} >= trajectory length {n}")
    rot_err, trans_err = [], []
    for k in range(n - delta):
        step_ref = compose(inverse(pair.reference[k]),
                           pair.reference[k + delta])
        step_est = compose(inverse(pair.estimate[k]),
                           pair.estimate[k + delta])
        err = compose(inverse(step_ref), step_est)
        rot_err.append(rotation_angle_between(err.rotation,
                                              Rotation.identity()))
        trans_err.append(np.linalg.norm(err.translation))
    out = {"rot": _stats_deg(rot_err), "trans": _stats_mm(trans_err)}
    out["per_step_rot_deg"] = np.degrees(np.array(rot_err))
    out["per_step_trans_mm"] = np.array(trans_err) * 1000.0
    return out


def _adds_frame(est_pts, ref_pts):
    """Mean nearest-neighbor distance (symmetric-aware ADD)."""
    if len(ref_pts) <= ADD_BRUTE_FORCE_LIMIT:
        d = np.linalg.norm(est_pts[:, None, :] - ref_pts[None, :, :], axis=2)
        return float(d.min(axis=1).mean())
    tree = cKDTree(ref_pts)
    dist, _ = tree.query(est_pts)
    return float(dist.mean())


def _recall_auc(distances_m, max_m):
    """Exact area under the recall-vs-threshold step curve on (0, max]."""
    d = np.asarray(distances_m, dtype=float)
    return float(np.clip(1.0 - d / max_m, 0.0, 1.0).mean()) * 100.0


def add_metrics(pair, model):
    """ADD/ADD-S AUC over (0, 0.1 m) and 0.1-diameter recalls, percent."""
    if not isinstance(model, ModelPoints):
        model = ModelPoints(model)
    pts = model.points
    add_per_frame, adds_per_frame = [], []
    for est, ref in zip(pair.estimate, pair.reference):
        pe = est.apply(pts)
        pr = ref.apply(pts)
        add_per_frame.append(float(np.linalg.norm(pe - pr, axis=1).mean()))
        adds_per_frame.append(_adds_frame(pe, pr))
    add_arr = np.array(add_per_frame)
    adds_arr = np.array(adds_per_frame)
    thr = 0.1 * model.diameter
    return {
        "add_auc": _recall_auc(add_arr, ADD_AUC_MAX_M),
        "adds_auc": _recall_auc(adds_arr, ADD_AUC_MAX_M),
        "add_01d": float((add_arr < thr).mean()) * 100.0,
        "adds_01d": float((adds_arr < thr).mean()) * 100.0,
        "per_frame_add_m": add_arr,
        "per_frame_adds_m": adds_arr,
    }


# --- oriented-box IoU ------------------------------------------------------

_CORNER_SIGNS = np.array([[sx, sy, sz]
                          for sx in (-1, 1) for sy in (-1, 1)
                          for sz in (-1, 1)], dtype=float)

# quads of the +-axis faces in terms of corner-sign indices
_FACE_CORNERS = [
    [0, 1, 3, 2], [4, 5, 7, 6],  # x = -/+ half
    [0, 1, 5, 4], [2, 3, 7, 6],  # y = -/+ half
    [0, 2, 6, 4], [1, 3, 7, 5],  # z = -/+ half
]

_PLANE_EPS = 1e-12


def box_corners(extents):
    """8 corners of an origin-centered box with the given full extents."""
    extents = np.asarray(extents, dtype=float)
    if extents.shape != (3,) or np.any(extents <= 0):
        raise ValidationError("box extents must be 3 positive dimensions")
    return _CORNER_SIGNS * (extents / 2.0)


def _clip_polygon(poly, normal, offset):
    """Keep the part of a 3D polygon with normal . x <= offset."""
    out = []
    n = len(poly)
    for k in range(n):
        cur = poly[k]
        nxt = poly[(k + 1) % n]
        c_in = normal @ cur <= offset + _PLANE_EPS
        x_in = normal @ nxt <= offset + _PLANE_EPS
        if c_in:
            out.append(cur)
        if c_in != x_in:
            denom = normal @ (nxt - cur)
            if abs(denom) > 1e-300:
                s = (offset - normal @ cur) / denom
                out.append(cur + np.clip(s, 0.0, 1.0) * (nxt - cur))
    return out


def _box_halfspaces(rotation, center, extents):
    """(normal, offset) pairs of the 6 face planes of a posed box."""
    planes = []
    for axis in range(3):
        n = rotation[:, axis]
        c = float(n @ center)
        h = extents[axis] / 2.0
        planes.append((n, c + h))
        planes.append((-n, -(c - h)))
    return planes


def _clip_faces(corners, halfspaces):
    verts = []
    for face in _FACE_CORNERS:
        poly = [corners[i] for i in face]
        for normal, offset in halfspaces:
            poly = _clip_polygon(poly, normal, offset)
            if not poly:
                break
        verts.extend(poly)
    return verts


def box_intersection_volume(pose_a, extents_a, pose_b, extents_b):
    """Exact intersection volume of two oriented boxes, cubic meters."""
    rel = compose(inverse(pose_a), pose_b)
    rb = rel.rotation.matrix()
    tb = rel.translation
    corners_a = box_corners(extents_a)
    corners_b = (box_corners(extents_b) @ rb.T) + tb
    planes_a = _box_halfspaces(np.eye(3), np.zeros(3),
                               np.asarray(extents_a, dtype=float))
    planes_b = _box_halfspaces(rb, tb, np.asarray(extents_b, dtype=float))
    verts = _clip_faces(corners_b, planes_a) + _clip_faces(corners_a,
                                                           planes_b)
    if len(verts) < 4:
        return 0.0
    try:
        vol = float(ConvexHull(np.asarray(verts)).volume)
    except QhullError:
        return 0.0  # degenerate (flat) intersection
    cap = min(float(np.prod(extents_a)), float(np.prod(extents_b)))
    return min(vol, cap)


def box_iou(pose_a, extents_a, pose_b, extents_b):
    """Oriented-box IoU in [0, 1]."""
    vi = box_intersection_volume(pose_a, extents_a, pose_b, extents_b)
    va = float(np.prod(np.asarray(extents_a, dtype=float)))
    vb = float(np.prod(np.asarray(extents_b, dtype=float)))
    return vi / (va + vb - vi)


def iou3d(pair, extents, thresholds=(0.25, 0.50, 0.75)):
    """Per-frame oriented-box IoU and recalls at the given thresholds."""
    extents = np.asarray(extents, dtype=float)
    if extents.ndim == 1:
        extents = np.broadcast_to(extents, (len(pair), 3))
    if extents.shape != (len(pair), 3):
        raise ValidationError("extents must be (3,) or (n_frames, 3)")
    if np.any(extents <= 0):
        raise ValidationError("box extents must be positive")
    per_frame = np.array([
        box_iou(est, ext, ref, ext)
        for est, ref, ext in zip(pair.estimate, pair.reference, extents)
    ])
    recalls = {int(t * 100): float((per_frame >= t).mean()) * 100.0
               for t in thresholds}
    return {"per_frame": per_frame, "recalls": recalls}


def pose_recalls(pair, thresholds=((5, 2), (5, 5), (10, 2), (10, 5))):
    """Joint rotation/translation threshold recalls, percent.

    Each threshold is (degrees, centimeters); a frame passes when both
    errors are below their bounds.
    """
    if not thresholds:
        raise ValidationError("at least one (deg, cm) threshold required")
    rot = np.array([
        rotation_angle_between(e.rotation, r.rotation)
        for e, r in zip(pair.estimate, pair.reference)])
    trans = np.array([
        np.linalg.norm(e.translation - r.translation)
        for e, r in zip(pair.estimate, pair.reference)])
    out = {}
    for deg, cm in thresholds:
        ok = (np.degrees(rot) < deg) & (trans * 100.0 < cm)
        out[(deg, cm)] = float(ok.mean()) * 100.0
    return out


@dataclass
class EvaluationReport:
    """Bundle of every metric for one trajectory pair."""

    ate: dict
    rpe_rot: dict
    rpe_trans: dict
    add_auc: float = None
    adds_auc: float = None
    add_01d: float = None
    adds_01d: float = None
    iou_recalls: dict = None
    pose_recalls: dict = None
    n_frames: int = 0


def evaluate_pair(pair, model=None, extents=None, rpe_delta=1,
                  recall_thresholds=((5, 2), (5, 5), (10, 2), (10, 5)),
                  align=False):
    """Full evaluation of an estimate/reference trajectory pair."""
    ate_stats = ate(pair, align=align)
    rpe_stats = rpe(pair, delta=rpe_delta)
    report = EvaluationReport(
        ate={k: ate_stats[k] for k in ("mean", "median", "max")},
        rpe_rot={k: rpe_stats["rot"][k] for k in ("mean", "median", "max")},
        rpe_trans={k: rpe_stats["trans"][k]
                   for k in ("mean", "median", "max")},
        pose_recalls=pose_recalls(pair, recall_thresholds),
        n_frames=len(pair),
    )
    if model is not None:
        add_stats = add_metrics(pair, model)
        report.add_auc = add_stats["add_auc"]
        report.adds_auc = add_stats["adds_auc"]
        report.add_01d = add_stats["add_01d"]
        report.adds_01d = add_stats["adds_01d"]
    if extents is not None:
        report.iou_recalls = iou3d(pair, extents)["recalls"]
    return report
