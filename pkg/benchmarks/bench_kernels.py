"""Benchmark: compiled kernels vs the numpy fallback.

Times the batched primitives at several batch sizes plus two realistic
workloads (a smoother run and a pose-graph solve). Run:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from trajfuse.kernels import get_backend


def time_call(fn, *args, repeat=5, min_time=0.05):
    # warmup, then best-of-repeat with an adaptive inner loop
    fn(*args)
    loops = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(loops):
            fn(*args)
        dt = time.perf_counter() - t0
        if dt >= min_time:
            break
        loops *= 4
    best = dt / loops
    for _ in range(repeat - 1):
        t0 = time.perf_counter()
        for _ in range(loops):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / loops)
    return best


def bench_primitives(backends):
    rng = np.random.default_rng(0)
    rows = []
    for n in (8, 128, 4096):
        q = rng.normal(size=(n, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        v = rng.normal(size=(n, 3))
        xi = rng.normal(size=(n, 6))
        cases = [
            ("quat_mul", lambda b: b.quat_mul(q, q)),
            ("quat_rotate", lambda b: b.quat_rotate(q, v)),
            ("so3_exp", lambda b: b.so3_exp(v)),
            ("so3_log", lambda b: b.so3_log(q)),
            ("se3_exp", lambda b: b.se3_exp(xi)),
            ("se3_log", lambda b: b.se3_log(q, v)),
        ]
        for name, call in cases:
            times = [time_call(call, b) for b in backends]
            rows.append((f"{name}[n={n}]", times))
    return rows


def bench_smoother():
    from trajfuse.se3 import Pose, exp_so3
    from trajfuse.smoother import NoiseConfig, smooth

    rng = np.random.default_rng(1)
    p = np.array([0.0, 0.0, 0.9])
    meas = [(k, Pose(exp_so3(rng.normal(scale=0.02, size=3)),
                     p + rng.normal(scale=0.005, size=3)))
            for k in range(500)]
    noise = NoiseConfig()
    return time_call(lambda: smooth(meas, noise), repeat=3, min_time=0.2)


def bench_pose_graph():
    from trajfuse.pose_graph import (
        AbsoluteEdge,
        GraphNode,
        PoseGraph,
        RelativeEdge,
        optimize,
    )
    from trajfuse.se3 import Pose, Rotation, Twist, compose, exp_se3, inverse

    rng = np.random.default_rng(2)
    truth = [Pose(Rotation((1, 0, 0, 0)), (0.0, 0.0, 0.9))]
    for _ in range(499):
        truth.append(compose(truth[-1], exp_se3(Twist(
            rng.normal(scale=0.005, size=3), rng.normal(scale=0.01, size=3)))))
    nodes = [GraphNode(k, compose(p, exp_se3(Twist(
        rng.normal(scale=0.01, size=3), rng.normal(scale=0.01, size=3)))))
        for k, p in enumerate(truth)]
    abs_edges = [AbsoluteEdge(k, p, 1e5 * np.eye(6))
                 for k, p in enumerate(truth)]
    rel_edges = [RelativeEdge(k, k + 1,
                              compose(inverse(truth[k]), truth[k + 1]),
                              1e2 * np.eye(6)) for k in range(499)]

    def run():
        graph = PoseGraph([GraphNode(n.frame_index, n.pose) for n in nodes],
                          abs_edges, rel_edges)
        optimize(graph)

    return time_call(run, repeat=3, min_time=0.2)


def main():
    numpy_backend = get_backend("numpy")
    try:
        native_backend = get_backend("native")
    except ImportError:
        print("native kernels not built; run `python setup.py build_ext "
              "--inplace` first")
        return
    backends = [numpy_backend, native_backend]

    print(f"{'kernel':<22} {'numpy':>12} {'native':>12} {'speedup':>9}")
    for name, (t_np, t_nat) in bench_primitives(backends):
        print(f"{name:<22} {t_np * 1e6:>10.1f}us {t_nat * 1e6:>10.1f}us "
              f"{t_np / t_nat:>8.2f}x")

    import os
    import subprocess
    import sys

    # workload comparisons run in subprocesses so the backend selection
    # happens at import time, same as for users
    for label, script in (
        ("smoother 500 frames",
         "from benchmarks.bench_kernels import bench_smoother as f;"
         "print(f'{f():.4f}')"),
        ("pose graph 500 nodes",
         "from benchmarks.bench_kernels import bench_pose_graph as f;"
         "print(f'{f():.4f}')"),
    ):
        times = {}
        for backend_name, env_val in (("numpy", "1"), ("native", "0")):
            env = dict(os.environ, TRAJFUSE_PURE_PYTHON=env_val,
                       PYTHONPATH=".")
            out = subprocess.run([sys.executable, "-c", script], env=env,
                                 capture_output=True, text=True, check=True)
            times[backend_name] = float(out.stdout.strip().splitlines()[-1])
        print(f"{label:<22} {times['numpy'] * 1e3:>10.1f}ms "
              f"{times['native'] * 1e3:>10.1f}ms "
              f"{times['numpy'] / times['native']:>8.2f}x")


if __name__ == "__main__":
    main()
