"""SE(3) pose graph over absolute and relative edges.

Cost: sum over absolute edges of r^T O r with r = log(z^-1 T_i), plus the
same sum over relative edges with r = log(z^-1 T_i^-1 T_j), minimized by
Levenberg-Marquardt on the product manifold with right-perturbation
retraction T <- T exp(delta). Analytic Jacobians use the exact SE(3)
right-Jacobian inverse (closed form with the second-order Q block), so
they match finite differences to full first-order accuracy.

Absolute edges carry isotropic information w*I6 by reliability tier;
relative edges carry the registration information. Relative measurements
arrive as the camera-frame motion W (x_j = W x_i) and are conjugated by
the initialization pose of node i into the object-frame form the residual
expects; for the frame-to-frame motions of a video this conversion is
accurate to second order even when the initialization is poor.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import kernels
from .errors import (
    OptimizationError,
    UnanchoredGraphError,
    ValidationError,
)
from .kernels import _numpy_backend as nb
from .se3 import Pose, Rotation, Twist, compose, inverse

TIERS = ("default", "downweighted", "removed")


@dataclass
class GraphWeights:
    """Isotropic absolute-edge information by reliability tier."""

    absolute_default: float = 1e5
    absolute_downweighted: float = 5e2  # midpoint of the 1e2-1e3 band

    def __post_init__(self):
        if self.absolute_default <= 0 or self.absolute_downweighted <= 0:
            raise ValidationError("edge weights must be positive")


@dataclass
class Override:
    """Annotator decision for a frame range of absolute edges."""

    start: int
    end: int
    tier: str
    weight: float = None

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValidationError(f"unknown override tier {self.tier!r}")
        if self.end < self.start:
            raise ValidationError("override range end before start")
        if self.weight is not None and self.weight <= 0:
            raise ValidationError("override weight must be positive")


@dataclass
class GraphNode:
    frame_index: int
    pose: Pose


@dataclass
class AbsoluteEdge:
    frame_index: int
    measurement: Pose
    information: np.ndarray
    reliability_tier: str = "default"


@dataclass
class RelativeEdge:
    i: int
    j: int
    measurement: Pose
    information: np.ndarray

    def __post_init__(self):
        if self.i == self.j:
            raise ValidationError("relative edge must join distinct frames")


@dataclass
class PoseGraph:
    nodes: list
    abs_edges: list
    rel_edges: list

    def node_index(self):
        return {n.frame_index: k for k, n in enumerate(self.nodes)}


@dataclass
class OptimizeOptions:
    max_iters: int = 100
    lambda_init: float = 1e-6
    lambda_bounds: tuple = (1e-12, 1e8)
    abs_tol: float = 1e-10   # gradient infinity norm
    rel_tol: float = 1e-9    # relative cost decrease
    huber_delta: float = None  # None: plain quadratic kernel


@dataclass
class OptimizeResult:
    poses: list          # (frame_index, Pose)
    final_cost: float
    iterations: list     # per accepted/rejected step records
    converged: bool
    message: str


def residual_absolute(node, z):
    """r = log(z^-1 T): zero iff the node matches the measurement."""
    return _log_twist(compose(inverse(z), node))


def residual_relative(node_i, node_j, z):
    """r = log(z^-1 T_i^-1 T_j): zero iff T_j = T_i z."""
    return _log_twist(compose(inverse(z), compose(inverse(node_i), node_j)))


def _log_twist(pose):
    xi = kernels.se3_log(pose.rotation.q[None, :],
                         pose.translation[None, :])[0]
    return Twist(xi[:3], xi[3:])


# --- batched SE(3) Jacobian machinery ------------------------------------

def _so3_jl_inv(phi):
    """Inverse left Jacobian of SO(3), batched (N,3) -> (N,3,3)."""
    theta = np.linalg.norm(phi, axis=-1)
    c = nb._vinv_coeff(theta)
    ph = nb._skew(phi)
    eye = np.broadcast_to(np.eye(3), ph.shape)
    return eye - 0.5 * ph + c[..., None, None] * (ph @ ph)


def _se3_q_matrix(rho, phi):
    """Second-order block of the SE(3) left Jacobian (Barfoot's Q)."""
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < 1e-2
    t2 = theta * theta
    safe = np.where(small, 1.0, theta)
    with np.errstate(invalid="ignore", divide="ignore"):
        c1 = np.where(small, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
                      (theta - np.sin(theta)) / safe ** 3)
        c2 = np.where(small, -1.0 / 24.0 + t2 / 720.0 - t2 * t2 / 40320.0,
                      (1.0 - 0.5 * t2 - np.cos(theta)) / safe ** 4)
        c3 = np.where(small, -1.0 / 120.0 + t2 / 5040.0,
                      (theta - np.sin(theta) - theta * t2 / 6.0) / safe ** 5)
    p = nb._skew(rho)
    f = nb._skew(phi)
    fp = f @ p
    pf = p @ f
    fpf = fp @ f
    q = (0.5 * p
         + c1[..., None, None] * (fp + pf + fpf)
         - c2[..., None, None] * (f @ fp + pf @ f - 3.0 * fpf)
         - 0.5 * (c2 - 3.0 * c3)[..., None, None] * (fpf @ f + f @ fpf))
    return q


def _se3_jl_inv(xi):
    """Inverse left Jacobian of SE(3), batched (N,6) -> (N,6,6)."""
    rho, phi = xi[..., :3], xi[..., 3:]
    a = _so3_jl_inv(phi)
    q = _se3_q_matrix(rho, phi)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = a
    out[..., 3:, 3:] = a
    out[..., :3, 3:] = -a @ q @ a
    return out


def _se3_jr_inv(xi):
    """Inverse right Jacobian: Jr^{-1}(xi) = Jl^{-1}(-xi)."""
    return _se3_jl_inv(-xi)


def _adjoint(q, t):
    """Adjoint of a pose batch for [rho, phi] twists: exp(Ad xi)=T exp(xi) T^-1."""
    r = kernels.quat_to_matrix(q)
    out = np.zeros(q.shape[:-1] + (6, 6))
    out[..., :3, :3] = r
    out[..., 3:, 3:] = r
    out[..., :3, 3:] = nb._skew(t) @ r
    return out


# --- graph construction ---------------------------------------------------

def _tier_map(frames, overrides):
    frame_set = set(frames)
    tiers = {f: ("default", None) for f in frames}
    for ov in overrides:
        if ov.start not in frame_set or ov.end not in frame_set:
            raise ValidationError(
                f"override range [{ov.start},{ov.end}] outside the sequence")
        for f in range(ov.start, ov.end + 1):
            if f in frame_set:
                tiers[f] = (ov.tier, ov.weight)
    return tiers


def build_graph(smoothed, relatives, overrides=(), weights=None):
    """Assemble the pose graph from smoother output and relative estimates.

    Nodes initialize at the smoothed poses; across removed spans they fall
    back to chaining consecutive relative motions from the nearest trusted
    neighbor. Raises UnanchoredGraphError when a connected component has
    no active absolute edge.

    Relative edge weights divide the registration information by the
    squared inlier count: per-point errors share systematic depth/track
    bias, so the summed Gauss-Newton information overstates certainty by
    about the point count, and the extra factor keeps the absolute edges
    dominant for edges with O(100) points (elements land near 1e2 against
    the 1e5 absolute weight).
    """
    if weights is None:
        weights = GraphWeights()
    frames = smoothed.frame_indices()
    frame_set = set(frames)
    for est in relatives:
        if est.pair[0] not in frame_set or est.pair[1] not in frame_set:
            raise ValidationError(
                f"relative pair {est.pair} outside the smoothed frames")

    tiers = _tier_map(frames, overrides)
    smoothed_pose = {f: p for f, p, _ in smoothed.frames}

    abs_edges = []
    for f in frames:
        tier, weight = tiers[f]
        if tier == "default":
            w = weights.absolute_default
        elif tier == "downweighted":
            w = weight if weight is not None else weights.absolute_downweighted
        else:
            w = 0.0
        abs_edges.append(AbsoluteEdge(f, smoothed_pose[f], w * np.eye(6),
                                      tier))

    # initialization chains relatives across untrusted (downweighted or
    # removed) spans; the measurement conjugation below must use these
    # initial poses, not the untrusted smoothed ones, or the edges that
    # should rescue a bad frame inherit its error
    init = _initial_poses(frames, smoothed_pose, tiers, relatives)

    rel_edges = []
    for est in relatives:
        i, j = est.pair
        z = compose(inverse(init[i]), compose(est.pose, init[i]))
        # transport the camera-frame registration information into the
        # object-frame residual coordinates: r_obj = Ad(T_i^-1) r_cam, so
        # Omega_obj = Ad(T_i)^T Omega_cam Ad(T_i) keeps the quadratic cost
        # identical to the registration's own
        ad = _adjoint(init[i].rotation.q[None, :],
                      init[i].translation[None, :])[0]
        n_in = max(len(est.inliers), 1)
        omega = ad.T @ np.asarray(est.information, dtype=float) @ ad \
            / float(n_in * n_in)
        omega = 0.5 * (omega + omega.T)
        rel_edges.append(RelativeEdge(i, j, z, omega))

    nodes = [GraphNode(f, init[f]) for f in frames]
    graph = PoseGraph(nodes, abs_edges, rel_edges)
    _check_anchored(graph)
    return graph


def _initial_poses(frames, smoothed_pose, tiers, relatives):
    untrusted = {f for f in frames if tiers[f][0] != "default"}
    init = dict(smoothed_pose)
    if untrusted:
        step = {est.pair[0]: est for est in relatives
                if est.pair[1] == est.pair[0] + 1}
        back = {est.pair[1]: est for est in relatives
                if est.pair[1] == est.pair[0] + 1}
        for f in frames:  # forward chaining from trusted predecessors
            if f in untrusted and (f - 1) in init \
                    and (f - 1) not in untrusted and (f - 1) in step:
                init[f] = compose(step[f - 1].pose, init[f - 1])
                untrusted.discard(f)
        for f in reversed(frames):  # then backward for leading spans
            if f in untrusted and (f + 1) in init \
                    and (f + 1) not in untrusted and (f + 1) in back:
                init[f] = compose(inverse(back[f + 1].pose), init[f + 1])
                untrusted.discard(f)
    return init


def _check_anchored(graph):
    idx = graph.node_index()
    parent = list(range(len(graph.nodes)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in graph.rel_edges:
        ra, rb = find(idx[e.i]), find(idx[e.j])
        if ra != rb:
            parent[ra] = rb
    anchored = set()
    for e in graph.abs_edges:
        if e.reliability_tier != "removed":
            anchored.add(find(idx[e.frame_index]))
    loose = sorted({graph.nodes[k].frame_index for k in range(len(parent))
                    if find(k) not in anchored})
    if loose:
        raise UnanchoredGraphError(
            f"frames {loose[:8]}{'...' if len(loose) > 8 else ''} have no "
            "active absolute edge in their component")


# --- optimization ---------------------------------------------------------

class _Problem:
    """Array view of a graph plus the constant sparsity pattern."""

    def __init__(self, graph):
        self.frames = [n.frame_index for n in graph.nodes]
        idx = graph.node_index()
        self.n = len(graph.nodes)
        self.q = np.array([n.pose.rotation.q for n in graph.nodes])
        self.t = np.array([n.pose.translation for n in graph.nodes])

        active = [e for e in graph.abs_edges
                  if e.reliability_tier != "removed"]
        self.a_idx = np.array([idx[e.frame_index] for e in active], dtype=int)
        self.a_zq = np.array([e.measurement.rotation.q for e in active])
        self.a_zt = np.array([e.measurement.translation for e in active])
        self.a_omega = np.array([e.information for e in active])

        rel = graph.rel_edges
        self.r_i = np.array([idx[e.i] for e in rel], dtype=int)
        self.r_j = np.array([idx[e.j] for e in rel], dtype=int)
        self.r_zq = np.array([e.measurement.rotation.q for e in rel])
        self.r_zt = np.array([e.measurement.translation for e in rel])
        self.r_omega = np.array([e.information for e in rel])
        if len(rel) == 0:
            self.r_i = self.r_i.reshape(0)
            self.r_j = self.r_j.reshape(0)
            self.r_zq = self.r_zq.reshape(0, 4)
            self.r_zt = self.r_zt.reshape(0, 3)
            self.r_omega = self.r_omega.reshape(0, 6, 6)

        self._pattern = self._index_pattern()

    def _index_pattern(self):
        def block_rows_cols(bi, bj):
            r = (bi[:, None, None] * 6 + np.arange(6)[None, :, None])
            c = (bj[:, None, None] * 6 + np.arange(6)[None, None, :])
            shape = (len(bi), 6, 6)
            return (np.broadcast_to(r, shape).ravel(),
                    np.broadcast_to(c, shape).ravel())

        rows, cols = [], []
        for bi, bj in ((self.a_idx, self.a_idx),
                       (self.r_i, self.r_i), (self.r_j, self.r_j),
                       (self.r_i, self.r_j), (self.r_j, self.r_i)):
            r, c = block_rows_cols(bi, bj)
            rows.append(r)
            cols.append(c)
        return np.concatenate(rows), np.concatenate(cols)

    def residuals(self, q, t):
        """Per-edge twists: (absolute (ma,6), relative (mr,6))."""
        qa = q[self.a_idx]
        ta = t[self.a_idx]
        rel_q = kernels.quat_mul(kernels.quat_conj(self.a_zq), qa)
        rel_t = kernels.quat_rotate(kernels.quat_conj(self.a_zq),
                                    ta - self.a_zt)
        r_abs = kernels.se3_log(kernels.quat_normalize(rel_q), rel_t)

        qi, qj = q[self.r_i], q[self.r_j]
        ti, tj = t[self.r_i], t[self.r_j]
        qi_c = kernels.quat_conj(qi)
        m_q = kernels.quat_mul(qi_c, qj)
        m_t = kernels.quat_rotate(qi_c, tj - ti)
        zq_c = kernels.quat_conj(self.r_zq)
        e_q = kernels.quat_mul(zq_c, m_q)
        e_t = kernels.quat_rotate(zq_c, m_t - self.r_zt)
        r_rel = kernels.se3_log(kernels.quat_normalize(e_q), e_t)
        return r_abs, r_rel, (m_q, m_t)

    def edge_costs(self, r_abs, r_rel):
        s_abs = np.einsum("ei,eij,ej->e", r_abs, self.a_omega, r_abs)
        s_rel = np.einsum("ei,eij,ej->e", r_rel, self.r_omega, r_rel)
        return s_abs, s_rel


def _robust_weights(s, delta):
    """Huber IRLS weight and cost per edge from squared error s = r^T O r."""
    if delta is None:
        return np.ones_like(s), s
    e = np.sqrt(np.maximum(s, 0.0))
    w = np.where(e <= delta, 1.0, delta / np.maximum(e, 1e-300))
    cost = np.where(e <= delta, s, 2.0 * delta * e - delta * delta)
    return w, cost


def _total_cost(prob, q, t, delta):
    r_abs, r_rel, _ = prob.residuals(q, t)
    s_abs, s_rel = prob.edge_costs(r_abs, r_rel)
    _, c_abs = _robust_weights(s_abs, delta)
    _, c_rel = _robust_weights(s_rel, delta)
    return float(c_abs.sum() + c_rel.sum())


def _linearize(prob, q, t, delta):
    r_abs, r_rel, (m_q, m_t) = prob.residuals(q, t)
    s_abs, s_rel = prob.edge_costs(r_abs, r_rel)
    w_abs, c_abs = _robust_weights(s_abs, delta)
    w_rel, c_rel = _robust_weights(s_rel, delta)
    cost = float(c_abs.sum() + c_rel.sum())

    n6 = prob.n * 6
    grad = np.zeros((prob.n, 6))

    j_abs = _se3_jr_inv(r_abs)
    om_abs = prob.a_omega * w_abs[:, None, None]
    h_aa = np.einsum("eki,ekl,elj->eij", j_abs, om_abs, j_abs)
    g_abs = np.einsum("eki,ekl,el->ei", j_abs, om_abs, r_abs)
    np.add.at(grad, prob.a_idx, g_abs)

    j_j = _se3_jr_inv(r_rel)
    minv_q = kernels.quat_conj(m_q)
    minv_t = -kernels.quat_rotate(minv_q, m_t)
    j_i = -(j_j @ _adjoint(minv_q, minv_t))
    om_rel = prob.r_omega * w_rel[:, None, None]
    h_ii = np.einsum("eki,ekl,elj->eij", j_i, om_rel, j_i)
    h_jj = np.einsum("eki,ekl,elj->eij", j_j, om_rel, j_j)
    h_ij = np.einsum("eki,ekl,elj->eij", j_i, om_rel, j_j)
    g_i = np.einsum("eki,ekl,el->ei", j_i, om_rel, r_rel)
    g_j = np.einsum("eki,ekl,el->ei", j_j, om_rel, r_rel)
    np.add.at(grad, prob.r_i, g_i)
    np.add.at(grad, prob.r_j, g_j)

    data = np.concatenate([
        h_aa.ravel(), h_ii.ravel(), h_jj.ravel(),
        h_ij.ravel(), h_ij.transpose(0, 2, 1).ravel(),
    ])
    rows, cols = prob._pattern
    h = sp.coo_matrix((data, (rows, cols)), shape=(n6, n6)).tocsc()
    return cost, h, grad.ravel()


def _retract(q, t, delta):
    """Right-perturbation retraction T <- T exp(delta) on every node."""
    d = delta.reshape(-1, 6)
    eq, et = kernels.se3_exp(d)
    q_new = kernels.quat_normalize(kernels.quat_mul(q, eq))
    t_new = t + kernels.quat_rotate(q, et)
    return q_new, t_new


def optimize(graph, opts=None):
    """Minimize the graph cost by damped Gauss-Newton (LM).

    Multiplicative damping on the Hessian diagonal keeps the iterate
    sequence invariant under a global rescaling of all information
    matrices. Accepted steps never increase the cost.
    """
    if opts is None:
        opts = OptimizeOptions()
    _check_anchored(graph)
    prob = _Problem(graph)
    q, t = prob.q.copy(), prob.t.copy()
    lam = opts.lambda_init
    lam_min, lam_max = opts.lambda_bounds
    delta = opts.huber_delta

    cost = _total_cost(prob, q, t, delta)
    log = []
    converged = False
    message = "max iterations reached"

    for it in range(opts.max_iters):
        cost, h, g = _linearize(prob, q, t, delta)
        if np.abs(g).max() < opts.abs_tol:
            converged = True
            message = "gradient below tolerance"
            break
        diag = h.diagonal()
        accepted = False
        while True:
            damped = h + sp.diags(lam * diag)
            try:
                step = spsolve(damped, -g)
                solve_ok = np.all(np.isfinite(step))
            except RuntimeError:
                solve_ok = False
            if solve_ok:
                q_new, t_new = _retract(q, t, step)
                new_cost = _total_cost(prob, q_new, t_new, delta)
                if new_cost <= cost:
                    accepted = True
            if accepted:
                log.append({"iteration": it, "cost": new_cost,
                            "lambda": lam, "accepted": True,
                            "step_norm": float(np.linalg.norm(step))})
                break
            log.append({"iteration": it,
                        "cost": cost if not solve_ok else new_cost,
                        "lambda": lam, "accepted": False,
                        "step_norm": float("nan")})
            lam *= 10.0
            if lam > lam_max:
                if not solve_ok:
                    raise OptimizationError(
                        "normal equations unsolvable at maximum damping",
                        last_poses=_poses_out(prob, q, t))
                converged = True
                message = "no decrease possible at maximum damping"
                break
        if not accepted:
            break
        q, t = q_new, t_new
        decrease = cost - new_cost
        cost = new_cost
        lam = max(lam / 3.0, lam_min)
        if decrease < opts.rel_tol * max(cost, 1e-300):
            converged = True
            message = "cost decrease below tolerance"
            break

    return OptimizeResult(_poses_out(prob, q, t), cost, log, converged,
                          message)


def _poses_out(prob, q, t):
    return [(f, Pose(Rotation(qk), tk))
            for f, qk, tk in zip(prob.frames, q, t)]
