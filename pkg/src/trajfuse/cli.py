"""Command-line pipeline: smooth, relpose, optimize, evaluate, synth,
export-overlays, serve.

Each stage reads and writes files so stages compose and stay individually
testable. Exit codes: 0 success, 1 validation error, 2 numerical failure.
A config file (INI sections, see DEFAULT_CONFIG) supplies defaults; CLI
flags override file values.
"""

import argparse
import configparser
import json
import math
import sys
import warnings
from functools import lru_cache
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import dataio
from .errors import (
    InsufficientDataError,
    NumericalError,
    TrajFuseError,
    ValidationError,
)
from .metrics import TrajectoryPair, evaluate_pair
from .pose_graph import (
    GraphWeights,
    OptimizeOptions,
    build_graph,
    optimize,
)
from .relpose import RansacConfig, backproject, register
from .smoother import NoiseConfig, smooth

CONFIG_SCHEMA = {
    "smoother": {"sigma_trans", "sigma_rot_deg", "q_accel", "q_alpha",
                 "rate_hz"},
    "relpose": {"strides", "ransac_iters", "inlier_mm", "sigma_point_mm",
                "seed"},
    "graph": {"abs_weight", "down_weight"},
    "optimizer": {"max_iters", "lambda_init", "rel_tol", "abs_tol",
                  "huber_delta"},
}


def load_config(path):
    """Flat sectioned key=value config; unknown sections/keys rejected."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ValidationError(f"config file {path} not found")
    out = {}
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ValidationError(f"unknown config section [{section}]")
        out[section] = {}
        for key, value in parser[section].items():
            if key not in CONFIG_SCHEMA[section]:
                raise ValidationError(
                    f"unknown config key {key!r} in [{section}]")
            out[section][key] = value
    return out


def _cfg(config, section, key, fallback=None):
    return config.get(section, {}).get(key, fallback)


def _pick(flag_value, config, section, key, default, cast=float):
    if flag_value is not None:
        return flag_value
    raw = _cfg(config, section, key)
    if raw is not None and raw != "":
        return cast(raw)
    return default


def _noise_from_args(args, config):
    return NoiseConfig(
        sigma_meas_trans=_pick(args.sigma_trans, config, "smoother",
                               "sigma_trans", 0.005),
        sigma_meas_rot=math.radians(_pick(args.sigma_rot_deg, config,
                                          "smoother", "sigma_rot_deg", 1.0)),
        q_accel=_pick(args.q_accel, config, "smoother", "q_accel", 0.5),
        q_alpha=_pick(args.q_alpha, config, "smoother", "q_alpha", 0.5),
        dt=1.0 / _pick(args.rate_hz, config, "smoother", "rate_hz", 15.0),
    )


def cmd_smooth(args):
    config = load_config(args.config) if args.config else {}
    measurements = dataio.read_pose_trajectory(args.poses)
    result = smooth(measurements, _noise_from_args(args, config))
    dataio.write_pose_trajectory(
        args.out, [(f, p) for f, p, _ in result.frames])
    print(f"smoothed {len(result.frames)} frames "
          f"({int(result.gap_mask.sum())} bridged) -> {args.out}")
    return 0


def cmd_relpose(args):
    config = load_config(args.config) if args.config else {}
    manifest = dataio.read_manifest(Path(args.sequence) / "manifest.txt")
    manifest.validate_files()
    tracks = dataio.read_tracks(manifest.path(manifest.tracks))

    strides_raw = args.strides if args.strides is not None \
        else _cfg(config, "relpose", "strides", "1,5")
    strides = sorted({int(s) for s in str(strides_raw).split(",")})
    if any(s < 1 for s in strides):
        raise ValidationError("strides must be positive")
    ransac = RansacConfig(
        iters=int(_pick(args.ransac_iters, config, "relpose",
                        "ransac_iters", 500, int)),
        inlier_threshold_m=_pick(args.inlier_mm, config, "relpose",
                                 "inlier_mm", 10.0) / 1000.0,
        seed=int(_pick(args.seed, config, "relpose", "seed", 0, int)))
    sigma_point = _pick(args.sigma_point_mm, config, "relpose",
                        "sigma_point_mm", 5.0) / 1000.0

    @lru_cache(maxsize=16)
    def frame_data(frame):
        depth, _ = dataio.read_depth(manifest.depth_path(frame))
        mask = dataio.read_mask(manifest.mask_path(frame))
        return depth, mask

    estimates = []
    skipped = 0
    for stride in strides:
        for i in range(manifest.frames - stride):
            j = i + stride
            try:
                depth_i, mask_i = frame_data(i)
                depth_j, mask_j = frame_data(j)
                corr = backproject(tracks, depth_i, depth_j, mask_i, mask_j,
                                   manifest.intrinsics, (i, j))
                estimates.append(register(corr, ransac, sigma_point))
            except (InsufficientDataError, NumericalError) as exc:
                warnings.warn(f"pair ({i},{j}) skipped: {exc}")
                skipped += 1
    if not estimates:
        raise NumericalError("no relative pose could be estimated")
    dataio.write_relative_estimates(args.out, estimates)
    print(f"registered {len(estimates)} pairs ({skipped} skipped) "
          f"-> {args.out}")
    return 0


def cmd_optimize(args):
    config = load_config(args.config) if args.config else {}
    smoothed_traj = dataio.read_pose_trajectory(args.smoothed)
    from .smoother import SmoothedTrajectory

    smoothed = SmoothedTrajectory(
        [(f, p, np.eye(12)) for f, p in smoothed_traj])
    relatives = dataio.read_relative_estimates(args.relatives) \
        if args.relatives else []
    overrides = dataio.read_overrides(args.overrides) if args.overrides \
        else []
    weights = GraphWeights(
        absolute_default=_pick(args.abs_weight, config, "graph",
                               "abs_weight", 1e5),
        absolute_downweighted=_pick(args.down_weight, config, "graph",
                                    "down_weight", 5e2))
    opts = OptimizeOptions(
        max_iters=int(_pick(args.max_iters, config, "optimizer",
                            "max_iters", 100, int)),
        lambda_init=_pick(args.lambda_init, config, "optimizer",
                          "lambda_init", 1e-6),
        rel_tol=_pick(None, config, "optimizer", "rel_tol", 1e-9),
        abs_tol=_pick(None, config, "optimizer", "abs_tol", 1e-10),
        huber_delta=_pick(args.huber_delta, config, "optimizer",
                          "huber_delta", None))

    graph = build_graph(smoothed, relatives, overrides, weights)
    result = optimize(graph, opts)
    dataio.write_pose_trajectory(args.out, result.poses)
    accepted = sum(1 for r in result.iterations if r["accepted"])
    print(f"optimized {len(result.poses)} poses: cost {result.final_cost:.6e}"
          f" after {accepted} accepted steps ({result.message}) "
          f"-> {args.out}")
    return 0


def _paired(est_traj, ref_traj):
    est_map = dict(est_traj)
    ref_map = dict(ref_traj)
    common = sorted(set(est_map) & set(ref_map))
    if len(common) < 2:
        raise ValidationError("fewer than 2 common frames to evaluate")
    dropped = (len(est_map) - len(common)) + (len(ref_map) - len(common))
    if dropped:
        warnings.warn(f"{dropped} frames without a counterpart dropped")
    return TrajectoryPair([est_map[f] for f in common],
                          [ref_map[f] for f in common], common)


def cmd_evaluate(args):
    pair = _paired(dataio.read_pose_trajectory(args.estimate),
                   dataio.read_pose_trajectory(args.reference))
    model = dataio.read_model_points(args.model) if args.model else None
    extents = None
    if args.extents:
        extents = np.array([float(v) for v in args.extents.split(",")])
    report = evaluate_pair(pair, model=model, extents=extents,
                           rpe_delta=args.rpe_delta, align=args.align)
    if args.out:
        dataio.write_report(args.out, report)
    print(dataio.format_report_table(report))
    return 0


def cmd_synth(args):
    spec = dataio.SynthSpec(
        sequence=args.name,
        frames=args.frames,
        rate_hz=args.rate_hz,
        width=args.width,
        height=args.height,
        focal_px=args.focal_px,
        motion_profile=args.profile,
        sigma_trans=args.sigma_trans_mm / 1000.0,
        sigma_rot_deg=args.sigma_rot_deg,
        track_pixel_sigma=args.track_sigma_px,
        corrupt_frames=tuple(int(f) for f in args.corrupt.split(","))
        if args.corrupt else (),
        n_track_points=args.track_points,
        seed=args.seed)
    manifest = dataio.synth_sequence(spec, args.out)
    print(f"generated {manifest.frames} frames at {manifest.rate_hz} Hz "
          f"-> {args.out}")
    return 0


def cmd_export_overlays(args):
    manifest = dataio.read_manifest(Path(args.sequence) / "manifest.txt")
    trajectories = {}
    for spec in args.traj:
        if "=" not in spec:
            raise ValidationError(
                f"--traj expects name=path, got {spec!r}")
        name, path = spec.split("=", 1)
        trajectories[name] = dataio.read_pose_trajectory(path)
    if not trajectories:
        gt_path = manifest.path(manifest.gt_poses)
        if gt_path.exists():
            trajectories["gt"] = dataio.read_pose_trajectory(gt_path)
    if not trajectories:
        raise ValidationError("no trajectories given and no gt in manifest")
    bundle = dataio.build_overlay_bundle(
        manifest.sequence, trajectories, manifest.extents,
        manifest.intrinsics)
    out = args.out or (Path(args.sequence) / "overlays.json")
    dataio.write_overlay_bundle(out, bundle)
    n = len(bundle["frame_indices"])
    print(f"wrote overlay bundle ({len(trajectories)} variants, "
          f"{n} frames) -> {out}")
    return 0


class ReviewHandler(BaseHTTPRequestHandler):
    """Serves overlay bundles and frames; accepts override files.

    GET /sequences            -> JSON list of sequence ids
    GET /bundle/<seq>         -> overlays.json of the sequence
    GET /frame/<seq>/<idx>    -> frame image
    PUT /overrides/<seq>      -> store the override file (validated)
    """

    root = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, code, body, content_type="application/json"):
        data = body if isinstance(body, bytes) else body.encode()
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, PUT, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(data)

    def _seq_dir(self, seq):
        if not seq or "/" in seq or ".." in seq or "\\" in seq:
            return None
        path = Path(self.root) / seq
        return path if path.is_dir() else None

    def do_OPTIONS(self):
        self._send(200, "{}")

    def do_GET(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if parts == ["sequences"]:
            seqs = sorted(p.name for p in Path(self.root).iterdir()
                          if p.is_dir() and ((p / "overlays.json").exists()
                                             or (p / "manifest.txt").exists()))
            self._send(200, json.dumps(seqs))
        elif len(parts) == 2 and parts[0] == "bundle":
            seq_dir = self._seq_dir(parts[1])
            bundle = seq_dir / "overlays.json" if seq_dir else None
            if bundle is None or not bundle.exists():
                self._send(404, json.dumps(
                    {"error": f"no bundle for {parts[1]!r}"}))
            else:
                self._send(200, bundle.read_bytes())
        elif len(parts) == 3 and parts[0] == "frame":
            seq_dir = self._seq_dir(parts[1])
            try:
                idx = int(parts[2])
            except ValueError:
                self._send(400, json.dumps({"error": "bad frame index"}))
                return
            img = seq_dir / "frames" / f"{idx:06d}.png" if seq_dir else None
            if img is None or not img.exists():
                self._send(404, json.dumps({"error": "frame not found"}))
            else:
                self._send(200, img.read_bytes(), "image/png")
        else:
            self._send(404, json.dumps({"error": "unknown route"}))

    def do_PUT(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if len(parts) != 2 or parts[0] != "overrides":
            self._send(404, json.dumps({"error": "unknown route"}))
            return
        seq_dir = self._seq_dir(parts[1])
        if seq_dir is None:
            self._send(404, json.dumps({"error": "unknown sequence"}))
            return
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length).decode()
        target = seq_dir / "overrides.csv"
        tmp = seq_dir / ".overrides.csv.tmp"
        try:
            tmp.write_text(body)
            overrides = dataio.read_overrides(tmp)
            tmp.replace(target)
        except TrajFuseError as exc:
            tmp.unlink(missing_ok=True)
            self._send(400, json.dumps({"error": str(exc)}))
            return
        self._send(200, json.dumps({"ok": True, "count": len(overrides)}))


def make_server(root, host="127.0.0.1", port=8731):
    handler = type("BoundReviewHandler", (ReviewHandler,), {"root": root})
    return ThreadingHTTPServer((host, port), handler)


def cmd_serve(args):
    if not Path(args.root).is_dir():
        raise ValidationError(f"serve root {args.root} is not a directory")
    server = make_server(args.root, args.host, args.port)
    print(f"serving {args.root} on http://{args.host}:{server.server_port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trajfuse",
        description="Object-pose trajectory fusion and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("smooth", help="EKF+RTS smooth an absolute pose file")
    p.add_argument("--poses", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--rate-hz", type=float, dest="rate_hz")
    p.add_argument("--sigma-trans", type=float, dest="sigma_trans")
    p.add_argument("--sigma-rot-deg", type=float, dest="sigma_rot_deg")
    p.add_argument("--q-accel", type=float, dest="q_accel")
    p.add_argument("--q-alpha", type=float, dest="q_alpha")
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("relpose",
                       help="register tracked points into relative poses")
    p.add_argument("--sequence", required=True,
                   help="sequence directory containing manifest.txt")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--strides")
    p.add_argument("--ransac-iters", type=int, dest="ransac_iters")
    p.add_argument("--inlier-mm", type=float, dest="inlier_mm")
    p.add_argument("--sigma-point-mm", type=float, dest="sigma_point_mm")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_relpose)

    p = sub.add_parser("optimize", help="pose-graph fuse smoothed+relative")
    p.add_argument("--smoothed", required=True)
    p.add_argument("--relatives")
    p.add_argument("--overrides")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--abs-weight", type=float, dest="abs_weight")
    p.add_argument("--down-weight", type=float, dest="down_weight")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--lambda-init", type=float, dest="lambda_init")
    p.add_argument("--huber-delta", type=float, dest="huber_delta")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="metric report for two pose files")
    p.add_argument("--estimate", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out")
    p.add_argument("--model")
    p.add_argument("--extents")
    p.add_argument("--rpe-delta", type=int, default=1, dest="rpe_delta")
    p.add_argument("--align", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--name", default="synth0")
    p.add_argument("--frames", type=int, default=500)
    p.add_argument("--rate-hz", type=float, default=15.0, dest="rate_hz")
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--focal-px", type=float, default=280.0, dest="focal_px")
    p.add_argument("--profile", default="constant_velocity",
                   choices=("static", "constant_velocity", "orbit"))
    p.add_argument("--sigma-trans-mm", type=float, default=0.0,
                   dest="sigma_trans_mm")
    p.add_argument("--sigma-rot-deg", type=float, default=0.0,
                   dest="sigma_rot_deg")
    p.add_argument("--track-sigma-px", type=float, default=0.0,
                   dest="track_sigma_px")
    p.add_argument("--corrupt", help="comma-separated frame indices")
    p.add_argument("--track-points", type=int, default=120,
                   dest="track_points")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export-overlays",
                       help="project box/axis overlays for review")
    p.add_argument("--sequence", required=True)
    p.add_argument("--out")
    p.add_argument("--traj", action="append", default=[],
                   metavar="NAME=PATH")
    p.set_defaults(func=cmd_export_overlays)

    p = sub.add_parser("serve", help="HTTP endpoints for the review UI")
    p.add_argument("--root", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8731)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
