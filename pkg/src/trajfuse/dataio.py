"""File formats, sequence layout, synthetic generator, overlay export.

On-disk conventions (all text files allow '#' comment lines):

* pose trajectory: CSV `frame,tx,ty,tz,qw,qx,qy,qz` (meters, quaternion
  w-first). Floats are written with repr, so write/read round-trips are
  bit-exact. Quaternion norms within 1e-6 of unit are accepted, within
  1e-3 renormalized with a warning, rejected beyond that.
* depth maps: 16-bit single-channel PNG, millimeters, 0 = invalid.
* model points: ASCII PLY (x,y,z vertices) or plain `x y z` text.
* overrides: CSV `start,end,tier[,weight]`.
* manifest: `key=value` lines naming every other file of a sequence.
* overlay bundle: one JSON document per sequence with projected box and
  axis polylines plus per-frame jitter for each trajectory variant.
"""

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError, ValidationError
from .metrics import EvaluationReport, ModelPoints, compute_diameter
from .pose_graph import Override
from .relpose import CameraIntrinsics, TrackTable
from .se3 import Pose, Rotation, compose, exp_so3, rotation_angle_between

QUAT_NORM_ACCEPT = 1e-6
QUAT_NORM_REJECT = 1e-3
NEAR_PLANE_M = 0.01


def _fmt(x):
    return repr(float(x))


def _data_lines(path):
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


# --- pose trajectories -----------------------------------------------------

def write_pose_trajectory(path, trajectory):
    """Write (frame_index, Pose) pairs; floats via repr for bit-exact IO."""
    lines = ["# frame,tx,ty,tz,qw,qx,qy,qz"]
    for frame, pose in trajectory:
        t = pose.translation
        q = pose.rotation.q
        lines.append(",".join([str(int(frame))] + [_fmt(v) for v in t]
                              + [_fmt(v) for v in q]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_pose_trajectory(path):
    """Read (frame_index, Pose) pairs with per-line validation."""
    out = []
    prev_frame = None
    for lineno, line in _data_lines(path):
        parts = line.split(",")
        if len(parts) != 8:
            raise ParseError(f"expected 8 fields, got {len(parts)}",
                             path=path, line=lineno)
        try:
            frame = int(parts[0])
            vals = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise ParseError(f"unparseable number ({exc})",
                             path=path, line=lineno) from exc
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite value", path=path, line=lineno)
        if prev_frame is not None and frame <= prev_frame:
            raise ParseError(f"frame {frame} not increasing",
                             path=path, line=lineno)
        prev_frame = frame
        q = np.array(vals[3:])
        norm_err = abs(float(np.linalg.norm(q)) - 1.0)
        if norm_err > QUAT_NORM_REJECT:
            raise ParseError(
                f"quaternion norm off unit by {norm_err:.2e}",
                path=path, line=lineno)
        if norm_err > QUAT_NORM_ACCEPT:
            warnings.warn(f"{path}:{lineno}: quaternion renormalized "
                          f"(norm error {norm_err:.2e})")
            q = q / np.linalg.norm(q)
        out.append((frame, Pose(Rotation(q), vals[:3])))
    if not out:
        raise ParseError("no pose lines found", path=path)
    return out


# --- depth maps ------------------------------------------------------------

def write_depth(path, depth_m):
    """Write a depth map in meters as 16-bit millimeter PNG (0 = invalid)."""
    depth_m = np.asarray(depth_m, dtype=float)
    mm = np.round(np.clip(depth_m, 0.0, 65.535) * 1000.0).astype(np.uint16)
    Image.fromarray(mm).save(path)  # uint16 -> 16-bit grayscale PNG


def read_depth(path):
    """Read a 16-bit millimeter PNG: (depth in meters, valid mask)."""
    img = Image.open(path)
    if img.mode not in ("I;16", "I", "I;16B"):
        raise ValidationError(
            f"{path}: depth maps must be 16-bit single-channel PNG, "
            f"got mode {img.mode!r}")
    arr = np.array(img)
    if arr.ndim != 2:
        raise ValidationError(f"{path}: depth map must be single-channel")
    if arr.max(initial=0) > 65535 or arr.min(initial=0) < 0:
        raise ValidationError(f"{path}: depth values outside 16-bit range")
    valid = arr > 0
    return arr.astype(float) / 1000.0, valid


def write_mask(path, mask):
    Image.fromarray((np.asarray(mask, dtype=bool) * 255).astype(np.uint8),
                    mode="L").save(path)


def read_mask(path):
    img = Image.open(path)
    return np.array(img.convert("L")) > 0


# --- model points ----------------------------------------------------------

def write_model_points(path, points):
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    lines = [" ".join(_fmt(v) for v in p) for p in pts]
    Path(path).write_text("\n".join(lines) + "\n")


def read_model_points(path):
    """Read an ASCII PLY or plain x-y-z list into ModelPoints."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if lines and lines[0].strip().lower() == "ply":
        pts = _parse_ascii_ply(lines, path)
    else:
        pts = []
        for lineno, line in _data_lines(path):
            parts = line.replace(",", " ").split()
            if len(parts) < 3:
                raise ParseError("expected at least 3 coordinates",
                                 path=path, line=lineno)
            try:
                pts.append([float(v) for v in parts[:3]])
            except ValueError as exc:
                raise ParseError(f"unparseable coordinate ({exc})",
                                 path=path, line=lineno) from exc
    pts = np.asarray(pts, dtype=float)
    if len(pts) == 0:
        raise ValidationError(f"{path}: no points found")
    diameter = compute_diameter(pts)
    if len(pts) > 1 and diameter <= 0.0:
        raise ValidationError(f"{path}: degenerate model (duplicate points)")
    return ModelPoints(pts, diameter)


def _parse_ascii_ply(lines, path):
    n_vertex = None
    header_end = None
    in_vertex_element = False
    vertex_props = []
    for k, raw in enumerate(lines):
        token = raw.strip().split()
        if not token:
            continue
        if token[0] == "element":
            in_vertex_element = token[1] == "vertex"
            if in_vertex_element:
                n_vertex = int(token[2])
        elif token[0] == "property" and in_vertex_element:
            vertex_props.append(token[-1])
        elif token[0] == "format" and token[1] != "ascii":
            raise ValidationError(f"{path}: only ascii PLY is supported")
        elif token[0] == "end_header":
            header_end = k
            break
    if n_vertex is None or header_end is None:
        raise ParseError("missing vertex element or end_header", path=path)
    for axis in ("x", "y", "z"):
        if axis not in vertex_props:
            raise ParseError(f"vertex property {axis} missing", path=path)
    ix, iy, iz = (vertex_props.index(a) for a in ("x", "y", "z"))
    pts = []
    for lineno in range(header_end + 1, header_end + 1 + n_vertex):
        if lineno >= len(lines):
            raise ParseError("fewer vertices than declared", path=path,
                             line=lineno + 1)
        parts = lines[lineno].split()
        try:
            pts.append([float(parts[ix]), float(parts[iy]),
                        float(parts[iz])])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"bad vertex line ({exc})", path=path,
                             line=lineno + 1) from exc
    return pts


# --- override files --------------------------------------------------------

def write_overrides(path, overrides):
    lines = ["# start,end,tier[,weight]"]
    for ov in overrides:
        row = f"{ov.start},{ov.end},{ov.tier}"
        if ov.weight is not None:
            row += f",{_fmt(ov.weight)}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")


def read_overrides(path):
    out = []
    for lineno, line in _data_lines(path):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (3, 4):
            raise ParseError("expected start,end,tier[,weight]",
                             path=path, line=lineno)
        try:
            start, end = int(parts[0]), int(parts[1])
            weight = float(parts[3]) if len(parts) == 4 else None
        except ValueError as exc:
            raise ParseError(f"unparseable override ({exc})",
                             path=path, line=lineno) from exc
        try:
            out.append(Override(start, end, parts[2], weight))
        except ValidationError as exc:
            raise ParseError(str(exc), path=path, line=lineno) from exc
    return out


# --- tracks ----------------------------------------------------------------

def write_tracks(path, tracks):
    lines = ["# point_id,frame,u,v,visible"]
    for pid, obs in tracks.items():
        for frame, (u, v, visible) in obs:
            lines.append(f"{pid},{frame},{_fmt(u)},{_fmt(v)},"
                         f"{1 if visible else 0}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_tracks(path):
    tracks = TrackTable()
    for lineno, line in _data_lines(path):
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError("expected point_id,frame,u,v,visible",
                             path=path, line=lineno)
        try:
            tracks.add(int(parts[0]), int(parts[1]), float(parts[2]),
                       float(parts[3]), bool(int(parts[4])))
        except ValueError as exc:
            raise ParseError(f"unparseable track entry ({exc})",
                             path=path, line=lineno) from exc
    return tracks


# --- relative estimate files ------------------------------------------------

def write_relative_estimates(path, estimates):
    """`i,j,n_inliers,pose(7),information upper triangle (21)` per line."""
    lines = ["# i,j,n_inliers,tx,ty,tz,qw,qx,qy,qz,info_upper_triangle_21"]
    iu = np.triu_indices(6)
    for est in estimates:
        t = est.pose.translation
        q = est.pose.rotation.q
        fields = [str(est.pair[0]), str(est.pair[1]), str(len(est.inliers))]
        fields += [_fmt(v) for v in t] + [_fmt(v) for v in q]
        fields += [_fmt(v) for v in est.information[iu]]
        lines.append(",".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def read_relative_estimates(path):
    from .relpose import RelativePoseEstimate

    iu = np.triu_indices(6)
    out = []
    for lineno, line in _data_lines(path):
        parts = line.split(",")
        if len(parts) != 3 + 7 + 21:
            raise ParseError(f"expected 31 fields, got {len(parts)}",
                             path=path, line=lineno)
        try:
            i, j, n_in = int(parts[0]), int(parts[1]), int(parts[2])
            vals = [float(p) for p in parts[3:]]
        except ValueError as exc:
            raise ParseError(f"unparseable number ({exc})",
                             path=path, line=lineno) from exc
        pose = Pose(Rotation(vals[3:7]), vals[0:3])
        info = np.zeros((6, 6))
        info[iu] = vals[7:]
        info = info + np.triu(info, 1).T
        out.append(RelativePoseEstimate((i, j), pose,
                                        np.arange(max(n_in, 3)), info))
    return out


# --- evaluation reports -----------------------------------------------------

def write_report(path, report):
    """Structured text: `[section]` headers with key=value lines."""
    lines = ["[meta]", f"frames={report.n_frames}"]
    for name, stats in (("ate_mm", report.ate),
                        ("rpe_rot_deg", report.rpe_rot),
                        ("rpe_trans_mm", report.rpe_trans)):
        lines.append(f"[{name}]")
        for key in ("mean", "median", "max"):
            lines.append(f"{key}={_fmt(stats[key])}")
    if report.add_auc is not None:
        lines.append("[add]")
        lines.append(f"add_auc={_fmt(report.add_auc)}")
        lines.append(f"adds_auc={_fmt(report.adds_auc)}")
        lines.append(f"add_01d={_fmt(report.add_01d)}")
        lines.append(f"adds_01d={_fmt(report.adds_01d)}")
    if report.iou_recalls is not None:
        lines.append("[iou_recalls]")
        for thr, val in sorted(report.iou_recalls.items()):
            lines.append(f"iou{thr}={_fmt(val)}")
    if report.pose_recalls is not None:
        lines.append("[pose_recalls]")
        for (deg, cm), val in report.pose_recalls.items():
            lines.append(f"{deg}deg{cm}cm={_fmt(val)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path):
    sections = {}
    current = None
    for lineno, line in _data_lines(path):
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = {}
        elif "=" in line and current is not None:
            key, val = line.split("=", 1)
            sections[current][key] = float(val)
        else:
            raise ParseError("expected section or key=value",
                             path=path, line=lineno)
    try:
        report = EvaluationReport(
            ate=sections["ate_mm"],
            rpe_rot=sections["rpe_rot_deg"],
            rpe_trans=sections["rpe_trans_mm"],
            n_frames=int(sections["meta"]["frames"]),
        )
    except KeyError as exc:
        raise ParseError(f"missing section {exc}", path=path) from exc
    if "add" in sections:
        report.add_auc = sections["add"]["add_auc"]
        report.adds_auc = sections["add"]["adds_auc"]
        report.add_01d = sections["add"]["add_01d"]
        report.adds_01d = sections["add"]["adds_01d"]
    if "iou_recalls" in sections:
        report.iou_recalls = {int(k[3:]): v
                              for k, v in sections["iou_recalls"].items()}
    if "pose_recalls" in sections:
        recalls = {}
        for key, val in sections["pose_recalls"].items():
            deg, rest = key.split("deg")
            recalls[(int(deg), int(rest[:-2]))] = val
        report.pose_recalls = recalls
    return report


def format_report_table(report):
    """Human-readable summary table."""
    rows = [("frames", f"{report.n_frames}")]
    for name, stats, unit in (("ATE", report.ate, "mm"),
                              ("RPE rot", report.rpe_rot, "deg"),
                              ("RPE trans", report.rpe_trans, "mm")):
        rows.append((f"{name} mean/median/max ({unit})",
                     f"{stats['mean']:.3f} / {stats['median']:.3f} / "
                     f"{stats['max']:.3f}"))
    if report.add_auc is not None:
        rows.append(("ADD / ADD-S AUC (%)",
                     f"{report.add_auc:.2f} / {report.adds_auc:.2f}"))
        rows.append(("ADD / ADD-S 0.1d recall (%)",
                     f"{report.add_01d:.2f} / {report.adds_01d:.2f}"))
    if report.iou_recalls is not None:
        rows.append(("IoU recalls 25/50/75 (%)",
                     " / ".join(f"{report.iou_recalls[t]:.2f}"
                                for t in (25, 50, 75))))
    if report.pose_recalls is not None:
        for (deg, cm), val in report.pose_recalls.items():
            rows.append((f"{deg}deg{cm}cm recall (%)", f"{val:.2f}"))
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {val}" for name, val in rows)


# --- sequence manifest -------------------------------------------------------

@dataclass
class SequenceManifest:
    sequence: str
    frames: int
    rate_hz: float
    intrinsics: CameraIntrinsics
    extents: np.ndarray
    root: Path = None
    depth_dir: str = "depth"
    mask_dir: str = "masks"
    frames_dir: str = "frames"
    model_points: str = "model_points.txt"
    gt_poses: str = "gt_poses.csv"
    abs_poses: str = "abs_poses.csv"
    tracks: str = "tracks.csv"

    def __post_init__(self):
        if self.frames < 1:
            raise ValidationError("manifest frame count must be >= 1")
        if self.rate_hz <= 0:
            raise ValidationError("manifest frame rate must be positive")
        self.extents = np.asarray(self.extents, dtype=float)

    def path(self, name):
        return Path(self.root) / name

    def depth_path(self, frame):
        return self.path(self.depth_dir) / f"{frame:06d}.png"

    def mask_path(self, frame):
        return self.path(self.mask_dir) / f"{frame:06d}.png"

    def frame_path(self, frame):
        return self.path(self.frames_dir) / f"{frame:06d}.png"

    def validate_files(self):
        missing = [str(p) for p in
                   (self.path(self.model_points), self.path(self.abs_poses),
                    self.path(self.tracks))
                   if not p.exists()]
        for frame in range(self.frames):
            for p in (self.depth_path(frame), self.mask_path(frame)):
                if not p.exists():
                    missing.append(str(p))
        if missing:
            raise ValidationError(
                f"manifest references missing files: {missing[:4]}"
                f"{'...' if len(missing) > 4 else ''}")


def write_manifest(manifest, path=None):
    path = Path(path) if path else Path(manifest.root) / "manifest.txt"
    k = manifest.intrinsics
    ext = ",".join(_fmt(v) for v in manifest.extents)
    lines = [
        f"sequence={manifest.sequence}",
        f"frames={manifest.frames}",
        f"rate_hz={_fmt(manifest.rate_hz)}",
        f"width={k.width}", f"height={k.height}",
        f"fx={_fmt(k.fx)}", f"fy={_fmt(k.fy)}",
        f"cx={_fmt(k.cx)}", f"cy={_fmt(k.cy)}",
        f"extents={ext}",
        f"depth_dir={manifest.depth_dir}",
        f"mask_dir={manifest.mask_dir}",
        f"frames_dir={manifest.frames_dir}",
        f"model_points={manifest.model_points}",
        f"gt_poses={manifest.gt_poses}",
        f"abs_poses={manifest.abs_poses}",
        f"tracks={manifest.tracks}",
    ]
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path):
    path = Path(path)
    kv = {}
    for lineno, line in _data_lines(path):
        if "=" not in line:
            raise ParseError("expected key=value", path=path, line=lineno)
        key, val = line.split("=", 1)
        kv[key.strip()] = val.strip()
    try:
        intr = CameraIntrinsics(
            fx=float(kv["fx"]), fy=float(kv["fy"]),
            cx=float(kv["cx"]), cy=float(kv["cy"]),
            width=int(kv["width"]), height=int(kv["height"]))
        manifest = SequenceManifest(
            sequence=kv["sequence"], frames=int(kv["frames"]),
            rate_hz=float(kv["rate_hz"]), intrinsics=intr,
            extents=[float(v) for v in kv["extents"].split(",")],
            root=path.parent,
            depth_dir=kv.get("depth_dir", "depth"),
            mask_dir=kv.get("mask_dir", "masks"),
            frames_dir=kv.get("frames_dir", "frames"),
            model_points=kv.get("model_points", "model_points.txt"),
            gt_poses=kv.get("gt_poses", "gt_poses.csv"),
            abs_poses=kv.get("abs_poses", "abs_poses.csv"),
            tracks=kv.get("tracks", "tracks.csv"))
    except KeyError as exc:
        raise ParseError(f"missing manifest key {exc}", path=path) from exc
    except ValueError as exc:
        raise ParseError(f"bad manifest value ({exc})", path=path) from exc
    return manifest


# --- synthetic sequences ------------------------------------------------------

@dataclass
class SynthSpec:
    """Generator configuration; defaults mirror a 500-frame 15 Hz capture."""

    sequence: str = "synth0"
    frames: int = 500
    rate_hz: float = 15.0
    width: int = 320
    height: int = 240
    focal_px: float = 280.0
    extents: tuple = (0.24, 0.18, 0.12)
    motion_profile: str = "constant_velocity"  # static | constant_velocity | orbit
    linear_velocity: tuple = (0.004, -0.003, 0.002)   # m/s
    angular_velocity: tuple = (0.10, 0.16, -0.07)     # rad/s
    orbit_radius: float = 0.08
    orbit_rate: float = 0.25          # rad/s
    sigma_trans: float = 0.0          # m, absolute-pose noise
    sigma_rot_deg: float = 0.0        # deg, absolute-pose noise
    track_pixel_sigma: float = 0.0    # px
    corrupt_frames: tuple = ()
    corrupt_rot_deg: float = 20.0
    corrupt_trans_mm: float = 50.0
    n_track_points: int = 120
    n_model_points: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.frames < 2:
            raise ValidationError("synth spec needs at least 2 frames")
        if self.rate_hz <= 0:
            raise ValidationError("synth frame rate must be positive")
        if self.motion_profile not in ("static", "constant_velocity",
                                       "orbit"):
            raise ValidationError(
                f"unknown motion profile {self.motion_profile!r}")
        bad = [f for f in self.corrupt_frames
               if not 0 <= int(f) < self.frames]
        if bad:
            raise ValidationError(f"corrupt frames outside range: {bad}")
        if min(self.extents) <= 0:
            raise ValidationError("extents must be positive")


def _base_pose():
    return Pose(exp_so3((0.4, -0.3, 0.2)), (0.02, -0.01, 0.9))


def synth_gt_poses(spec):
    """Ground-truth object poses in camera for every frame."""
    dt = 1.0 / spec.rate_hz
    base = _base_pose()
    poses = []
    for k in range(spec.frames):
        t = k * dt
        if spec.motion_profile == "static":
            poses.append(base)
        elif spec.motion_profile == "constant_velocity":
            p = base.translation + np.asarray(spec.linear_velocity) * t
            q = compose(base, Pose(exp_so3(np.asarray(spec.angular_velocity)
                                           * t), np.zeros(3))).rotation
            poses.append(Pose(q, p))
        else:  # orbit
            ang = spec.orbit_rate * t
            p = base.translation + spec.orbit_radius * np.array(
                [math.cos(ang) - 1.0, math.sin(ang), 0.3 * math.sin(ang)])
            q = compose(base, Pose(exp_so3(np.array([0.0, ang, 0.2 * ang])),
                                   np.zeros(3))).rotation
            poses.append(Pose(q, p))
    return poses


def _sample_box_surface(rng, extents, n):
    """Uniform points on the box surface, object-local coordinates."""
    ex, ey, ez = np.asarray(extents, dtype=float) / 2.0
    areas = np.array([ey * ez, ey * ez, ex * ez, ex * ez, ex * ey, ex * ey])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-1, 1, n)
    v = rng.uniform(-1, 1, n)
    pts = np.empty((n, 3))
    for k in range(n):
        a, b = u[k], v[k]
        if face[k] < 2:
            pts[k] = [(1 if face[k] % 2 else -1) * ex, a * ey, b * ez]
        elif face[k] < 4:
            pts[k] = [a * ex, (1 if face[k] % 2 else -1) * ey, b * ez]
        else:
            pts[k] = [a * ex, b * ey, (1 if face[k] % 2 else -1) * ez]
    return pts


def render_box_depth(pose, extents, intrinsics):
    """Analytic ray-box depth map plus hit mask (meters)."""
    k = intrinsics
    us = (np.arange(k.width) - k.cx) / k.fx
    vs = (np.arange(k.height) - k.cy) / k.fy
    uu, vv = np.meshgrid(us, vs)
    dirs = np.stack([uu, vv, np.ones_like(uu)], axis=-1)

    r_inv = pose.rotation.matrix().T
    origin = -r_inv @ pose.translation
    d_obj = dirs @ r_inv.T
    half = np.asarray(extents, dtype=float) / 2.0

    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - origin) / d_obj
        t2 = (half - origin) / d_obj
    t_near = np.nanmax(np.minimum(t1, t2), axis=-1)
    t_far = np.nanmin(np.maximum(t1, t2), axis=-1)
    hit = (t_far >= t_near) & (t_near > NEAR_PLANE_M)
    depth = np.where(hit, t_near, 0.0)
    return depth, hit


def _project(intrinsics, points):
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    u = intrinsics.fx * pts[:, 0] / pts[:, 2] + intrinsics.cx
    v = intrinsics.fy * pts[:, 1] / pts[:, 2] + intrinsics.cy
    return np.stack([u, v], axis=1)


def synth_sequence(spec, out_dir):
    """Generate a full on-disk sequence; deterministic for a fixed seed."""
    rng = np.random.default_rng(spec.seed)
    out = Path(out_dir)
    for sub in ("depth", "masks", "frames"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    k = CameraIntrinsics(fx=spec.focal_px, fy=spec.focal_px,
                         cx=spec.width / 2.0, cy=spec.height / 2.0,
                         width=spec.width, height=spec.height)
    gt = synth_gt_poses(spec)
    track_points = _sample_box_surface(rng, spec.extents,
                                       spec.n_track_points)
    model_pts = _sample_box_surface(rng, spec.extents, spec.n_model_points)

    sigma_rot = math.radians(spec.sigma_rot_deg)
    measured = []
    corrupt = {int(f) for f in spec.corrupt_frames}
    for frame, pose in enumerate(gt):
        zp = pose.translation.copy()
        zq = pose.rotation
        if spec.sigma_trans > 0:
            zp = zp + rng.normal(scale=spec.sigma_trans, size=3)
        if sigma_rot > 0:
            zq = compose(Pose(zq, np.zeros(3)),
                         Pose(exp_so3(rng.normal(scale=sigma_rot, size=3)),
                              np.zeros(3))).rotation
        if frame in corrupt:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            zq = compose(Pose(zq, np.zeros(3)),
                         Pose(exp_so3(axis
                                      * math.radians(spec.corrupt_rot_deg)),
                              np.zeros(3))).rotation
            zp = zp + direction * spec.corrupt_trans_mm / 1000.0
        measured.append((frame, Pose(zq, zp)))

    tracks = {pid: [] for pid in range(spec.n_track_points)}
    for frame, pose in enumerate(gt):
        depth, hit = render_box_depth(pose, spec.extents, k)

        cam_pts = pose.apply(track_points)
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = _project(k, cam_pts)
        depth_q = np.round(depth * 1000.0) / 1000.0  # what readers will see

        # geometric visibility, then a per-pixel z-buffer so that two
        # points sharing a pixel never corrupt each other's depth sample
        visible = {}
        nearest = {}
        for pid, ((u, v), z) in enumerate(zip(uv, cam_pts[:, 2])):
            if not z > NEAR_PLANE_M:
                continue
            px, py = int(round(u)), int(round(v))
            if not (0 <= px < k.width and 0 <= py < k.height):
                continue
            if abs(depth_q[py, px] - z) >= 0.006:  # occluded by the box
                continue
            if (py, px) not in nearest or z < nearest[(py, px)][0]:
                nearest[(py, px)] = (z, pid)
        for (py, px), (z, pid) in nearest.items():
            visible[pid] = (py, px)
            # a sensor observing this surface point reports its depth at
            # the containing pixel; the pixel-center ray depth can differ
            # by several mm on slanted faces
            depth[py, px] = z

        for pid, ((u, v), z) in enumerate(zip(uv, cam_pts[:, 2])):
            if pid not in visible:
                tracks[pid].append((frame, (-1.0, -1.0, False)))
                continue
            vis = True
            if spec.track_pixel_sigma > 0:
                u += rng.normal(scale=spec.track_pixel_sigma)
                v += rng.normal(scale=spec.track_pixel_sigma)
                vis = (0 <= int(round(u)) < k.width
                       and 0 <= int(round(v)) < k.height)
            tracks[pid].append((frame, (float(u), float(v), bool(vis))))

        write_depth(out / "depth" / f"{frame:06d}.png", depth)
        write_mask(out / "masks" / f"{frame:06d}.png", hit)
        vis = np.clip(depth / 2.0 * 255.0, 0, 255).astype(np.uint8)
        Image.fromarray(vis, mode="L").save(
            out / "frames" / f"{frame:06d}.png")

    write_pose_trajectory(out / "gt_poses.csv", list(enumerate(gt)))
    write_pose_trajectory(out / "abs_poses.csv", measured)
    write_tracks(out / "tracks.csv", tracks)
    write_model_points(out / "model_points.txt", model_pts)

    manifest = SequenceManifest(
        sequence=spec.sequence, frames=spec.frames, rate_hz=spec.rate_hz,
        intrinsics=k, extents=spec.extents, root=out)
    write_manifest(manifest)
    return manifest


# --- overlay bundles ----------------------------------------------------------

_BOX_EDGES = [(0, 1), (0, 2), (0, 4), (1, 3), (1, 5), (2, 3),
              (2, 6), (3, 7), (4, 5), (4, 6), (5, 7), (6, 7)]


def _project_segment(intrinsics, p1, p2):
    """Project a 3D segment, clipping against the near plane; None if gone."""
    z1, z2 = p1[2], p2[2]
    if z1 <= NEAR_PLANE_M and z2 <= NEAR_PLANE_M:
        return None
    if z1 <= NEAR_PLANE_M or z2 <= NEAR_PLANE_M:
        s = (NEAR_PLANE_M - z1) / (z2 - z1)
        clipped = p1 + s * (p2 - p1)
        if z1 <= NEAR_PLANE_M:
            p1 = clipped
        else:
            p2 = clipped
    uv = _project(intrinsics, np.stack([p1, p2]))
    return [[float(uv[0, 0]), float(uv[0, 1])],
            [float(uv[1, 0]), float(uv[1, 1])]]


def build_overlay_bundle(sequence, trajectories, extents, intrinsics):
    """Projected box/axis polylines plus jitter per variant.

    `trajectories` maps variant name ('raw', 'smoothed', 'pgo', 'gt', ...)
    to a (frame_index, Pose) list. Missing variants are simply absent.
    """
    from .metrics import box_corners

    extents = np.asarray(extents, dtype=float)
    corners_local = box_corners(extents)
    axis_len = 0.75 * extents / 2.0
    frame_axis = np.array([[0.0, 0.0, 0.0],
                           [axis_len[0], 0, 0],
                           [0, axis_len[1], 0],
                           [0, 0, axis_len[2]]])

    variants = {}
    all_frames = None
    for name, traj in trajectories.items():
        frames_out = []
        prev_pose = None
        for frame, pose in traj:
            cam_corners = pose.apply(corners_local)
            box = []
            for a, b in _BOX_EDGES:
                seg = _project_segment(intrinsics, cam_corners[a],
                                       cam_corners[b])
                if seg is not None:
                    box.append(seg)
            ax_pts = pose.apply(frame_axis)
            axes = []
            for end in (1, 2, 3):
                seg = _project_segment(intrinsics, ax_pts[0], ax_pts[end])
                if seg is not None:
                    axes.append(seg)
            if prev_pose is None:
                rot_deg, trans_mm = 0.0, 0.0
            else:
                rot_deg = math.degrees(rotation_angle_between(
                    prev_pose.rotation, pose.rotation))
                trans_mm = float(np.linalg.norm(
                    pose.translation - prev_pose.translation)) * 1000.0
            prev_pose = pose
            frames_out.append({
                "frame": int(frame),
                "box": box,
                "axes": axes,
                "jitter_rot_deg": rot_deg,
                "jitter_trans_mm": trans_mm,
                "jitter": rot_deg + trans_mm,
            })
        variants[name] = {"frames": frames_out}
        frame_ids = [f["frame"] for f in frames_out]
        if all_frames is None:
            all_frames = frame_ids
        elif frame_ids != all_frames:
            raise ValidationError(
                f"variant {name!r} frames differ from the other variants")

    return {
        "sequence": sequence,
        "frame_indices": all_frames or [],
        "width": intrinsics.width,
        "height": intrinsics.height,
        "variants": variants,
    }


def write_overlay_bundle(path, bundle):
    Path(path).write_text(json.dumps(bundle, sort_keys=True) + "\n")


def read_overlay_bundle(path):
    return json.loads(Path(path).read_text())
