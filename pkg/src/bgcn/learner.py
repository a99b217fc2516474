"""Learn a symmetric non-negative adjacency from pairwise distances.

Objective, over symmetric A >= 0 with zero diagonal:

    sum_ij A_ij Z_ij  -  alpha * sum_i log(sum_j A_ij)  +  beta * ||A||_F^2

The log-barrier on degrees rules out isolated nodes; beta shrinks weights.
The solver works on the upper-triangular edge vector w (symmetry is then
exact by construction):

    F(w) = 2 z.w - alpha * sum_i log((S w)_i) + 2 beta w.w

with S the edge-to-degree incidence operator. F splits into a non-negative
weighted-l1 part (closed-form prox), the barrier composed with S (closed
form prox of the convex conjugate, a quadratic root), and a smooth quadratic,
which is exactly the structure handled by forward-backward-forward
primal-dual iterations. Per-iteration cost is linear in the support size.

Scaling identity used throughout: the minimizer for (Z, alpha, beta) equals
sqrt(alpha/beta) times the minimizer for (Z / sqrt(alpha*beta), 1, 1), so a
single scale parameter theta (multiplying Z, larger theta -> sparser graph)
spans the whole family.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sparse

from .data import SparseGraph
from .distances import RestrictedDistance


@dataclass
class GraphLearnConfig:
    alpha: float = 1.0
    beta: float = 1.0
    theta: float | None = None     # one-parameter mode: solve (theta * Z, 1, 1)
    max_iter: int = 5000
    tol: float = 1e-6              # relative primal step at check intervals
    step_factor: float = 0.9
    check_every: int = 25
    weight_floor: float = 1e-8

    def validate(self) -> "GraphLearnConfig":
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.theta is not None and self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.tol <= 0 or self.max_iter <= 0 or not 0 < self.step_factor < 1:
            raise ValueError("bad solver settings")
        return self


@dataclass
class LearnedGraph:
    graph: SparseGraph
    objective: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)  # (iteration, objective) pairs


class CalibrationError(RuntimeError):
    def __init__(self, msg, theta=None, achieved=None, sweep=None):
        super().__init__(msg)
        self.theta = theta
        self.achieved = achieved
        self.sweep = sweep or []


@dataclass
class CalibrationReport:
    theta: float
    achieved_mean_degree: float
    sweep: list  # (theta, mean_degree), sorted by theta


def objective(adjacency, z, alpha: float, beta: float) -> float:
    """Exact objective value; +inf when any node has zero degree."""
    a = adjacency.to_dense() if hasattr(adjacency, "to_dense") else np.asarray(adjacency)
    z = np.asarray(z)
    if a.shape != z.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {z.shape}")
    deg = a.sum(axis=1)
    if np.any(deg <= 0):
        return float("inf")
    return float(np.sum(a * z) - alpha * np.sum(np.log(deg)) + beta * np.sum(a * a))


def _objective_edges(w, z, i_idx, j_idx, n, alpha, beta):
    deg = (np.bincount(i_idx, weights=w, minlength=n)
           + np.bincount(j_idx, weights=w, minlength=n))
    if np.any(deg <= 0):
        return float("inf")
    return float(2.0 * (z @ w) - alpha * np.sum(np.log(deg)) + 2.0 * beta * (w @ w))


def _solve_fbf(z, i_idx, j_idx, n, alpha, beta, cfg: GraphLearnConfig):
    """Forward-backward-forward primal-dual iterations on the edge vector.

    Stops once the relative primal step falls below cfg.tol (checked every
    cfg.check_every iterations). The iterate with the best objective seen at
    a checkpoint is kept and returned, so the reported trace of monitored
    values is non-increasing even though raw iterates may wobble.
    """
    m = z.size
    support_deg = (np.bincount(i_idx, minlength=n) + np.bincount(j_idx, minlength=n))
    op_norm = np.sqrt(2.0 * max(int(support_deg.max(initial=1)), 1))
    gamma = cfg.step_factor / (4.0 * beta + op_norm)

    # incidence operator with gamma folded in: gs @ w = gamma * (S w) and
    # gst @ v = gamma * (S^T v); S maps edge weights to node degrees
    gs = sparse.csr_array(
        (np.full(2 * m, gamma), (np.concatenate([i_idx, j_idx]), np.tile(np.arange(m), 2))),
        shape=(n, m))
    gst = sparse.csr_array(gs.T)

    w = np.zeros(m)
    v = np.zeros(n)
    two_gz = 2.0 * gamma * z
    shrink = 1.0 - gamma * 4.0 * beta
    trace = []
    best_f = float("inf")
    best_w = w
    converged = False
    it = 0
    y = np.empty(m)
    p = np.empty(m)
    dw = np.empty(m)
    for it in range(1, cfg.max_iter + 1):
        # y = shrink*w - gamma*S^T v ; yb = v + gamma*S w
        np.multiply(w, shrink, out=y)
        y -= gst @ v
        yb = v + gs @ w
        np.subtract(y, two_gz, out=p)
        np.maximum(p, 0.0, out=p)
        pb = 0.5 * (yb - np.sqrt(yb * yb + 4.0 * alpha * gamma))
        # dw = q - y with q = shrink*p - gamma*S^T pb, assembled in place
        np.multiply(p, shrink, out=dw)
        dw -= gst @ pb
        dw -= y
        qb = pb + gs @ p
        w += dw
        v += qb - yb

        if it % cfg.check_every == 0 or it == cfg.max_iter:
            # p is the proxed (feasible, exactly-sparse) iterate; at the fixed
            # point p == w, and p is what we hand back
            f = _objective_edges(p, z, i_idx, j_idx, n, alpha, beta)
            if f < best_f:
                best_f = f
                best_w = p.copy()  # p is a reused buffer
            trace.append((it, best_f))
            step = float(np.max(np.abs(dw), initial=0.0))
            if np.isfinite(f) and step <= cfg.tol * max(1.0, float(np.max(np.abs(w)))):
                converged = True
                break
    return (best_w if np.isfinite(best_f) else np.maximum(w, 0.0)), it, converged, trace


def _to_learned(w, z, i_idx, j_idx, n, alpha, beta, iterations, converged, trace,
                floor: float) -> LearnedGraph:
    keep = w > floor
    # never let the floor isolate a node: keep its heaviest edge instead
    deg_kept = (np.bincount(i_idx[keep], minlength=n)
                + np.bincount(j_idx[keep], minlength=n))
    if np.any(deg_kept == 0):
        for node in np.flatnonzero(deg_kept == 0):
            touching = np.flatnonzero((i_idx == node) | (j_idx == node))
            if touching.size:
                keep[touching[np.argmax(w[touching])]] = True
    graph = SparseGraph.from_edges(n, i_idx[keep], j_idx[keep], w[keep])
    return LearnedGraph(graph, _objective_edges(w, z, i_idx, j_idx, n, alpha, beta),
                        iterations, converged, trace)


def _dense_edges(z_mat: np.ndarray):
    n = z_mat.shape[0]
    if z_mat.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if not np.all(np.isfinite(z_mat)):
        raise ValueError("non-finite distance matrix")
    i_idx, j_idx = np.triu_indices(n, k=1)
    return z_mat[i_idx, j_idx], i_idx, j_idx, n


def _effective(cfg: GraphLearnConfig):
    """Resolve one-parameter mode into (alpha, beta).

    Solving (theta * Z, 1, 1) is identical to solving (Z, 1/theta, 1/theta)
    by the scaling identity, and the latter keeps the dual variables O(1)
    at large theta, where the direct form converges very slowly.
    """
    if cfg.theta is not None:
        return 1.0 / cfg.theta, 1.0 / cfg.theta
    return cfg.alpha, cfg.beta


def learn_graph(z_mat: np.ndarray, cfg: GraphLearnConfig | None = None) -> LearnedGraph:
    """Solve the dense all-pairs problem."""
    cfg = (cfg or GraphLearnConfig()).validate()
    z, i_idx, j_idx, n = _dense_edges(np.asarray(z_mat, dtype=np.float64))
    alpha, beta = _effective(cfg)
    w, it, conv, trace = _solve_fbf(z, i_idx, j_idx, n, alpha, beta, cfg)
    return _to_learned(w, z, i_idx, j_idx, n, alpha, beta, it, conv, trace,
                       cfg.weight_floor)


def learn_graph_restricted(zr: RestrictedDistance,
                           cfg: GraphLearnConfig | None = None) -> LearnedGraph:
    """Solve on a fixed symmetric support; off-support weights are zero."""
    cfg = (cfg or GraphLearnConfig()).validate()
    if not np.all(np.isfinite(zr.values)):
        raise ValueError("non-finite distance values")
    n = zr.num_nodes
    covered = (np.bincount(zr.i_idx, minlength=n) + np.bincount(zr.j_idx, minlength=n))
    if np.any(covered == 0):
        raise ValueError(f"node {int(np.flatnonzero(covered == 0)[0])} has empty support")
    alpha, beta = _effective(cfg)
    w, it, conv, trace = _solve_fbf(zr.values, zr.i_idx, zr.j_idx, n, alpha, beta, cfg)
    return _to_learned(w, zr.values, zr.i_idx, zr.j_idx, n, alpha, beta, it, conv, trace,
                       cfg.weight_floor)


def reduce_to_one_param(z_mat, alpha: float, beta: float):
    """Map (Z, alpha, beta) to (Z', 1, 1) plus the solution scale factor.

    learn_graph(Z, alpha, beta) == scale * learn_graph(Z', 1, 1) with
    Z' = Z / sqrt(alpha*beta) and scale = sqrt(alpha/beta).
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    return np.asarray(z_mat) / np.sqrt(alpha * beta), float(np.sqrt(alpha / beta))


def calibrate_sparsity(z_input, target_mean_degree: float,
                       cfg: GraphLearnConfig | None = None,
                       max_bisect: int = 20,
                       probe_max_iter: int = 600) -> CalibrationReport:
    """Bisection over the distance scale theta to hit a target mean degree.

    Larger theta means larger scaled distances and a sparser solution; the
    search brackets the target geometrically, then bisects in log space
    until the achieved mean degree (edges with weight above the floor,
    counted per node) is within +-20% of the target.
    """
    if target_mean_degree < 1:
        raise ValueError("target mean degree must be >= 1")
    cfg = (cfg or GraphLearnConfig()).validate()
    probe_cfg = replace(cfg, tol=max(cfg.tol, 1e-5),
                        max_iter=min(cfg.max_iter, probe_max_iter))

    if isinstance(z_input, RestrictedDistance):
        vals = z_input.values
        n = z_input.num_nodes
        solve = lambda th: learn_graph_restricted(  # noqa: E731
            z_input, replace(probe_cfg, theta=th))
    else:
        z_mat = np.asarray(z_input, dtype=np.float64)
        n = z_mat.shape[0]
        vals = z_mat[np.triu_indices(n, k=1)]
        solve = lambda th: learn_graph(z_mat, replace(probe_cfg, theta=th))  # noqa: E731

    positive = vals[vals > 0]
    theta0 = 1.0 / float(positive.mean()) if positive.size else 1.0

    sweep = []

    def mean_degree(theta):
        res = solve(theta)
        # stored entries count both directions, so entries/n is 2E/n
        m = int(np.count_nonzero(res.graph.weights > cfg.weight_floor)) / n
        sweep.append((theta, m))
        return m

    window = 0.2 * target_mean_degree

    def finish(theta, m):
        return CalibrationReport(theta, m, sorted(sweep))

    lo_ok = hi_ok = None  # (theta, degree) at or above / below the target
    theta = theta0
    m = mean_degree(theta)
    expand = 0
    while expand < 40:
        if abs(m - target_mean_degree) <= window:
            return finish(theta, m)
        if m >= target_mean_degree:
            lo_ok = (theta, m)
            if hi_ok is not None:
                break
            theta *= 8.0
        else:
            hi_ok = (theta, m)
            if lo_ok is not None:
                break
            theta /= 8.0
        m = mean_degree(theta)
        expand += 1

    if lo_ok is None or hi_ok is None:
        best = min(sweep, key=lambda tm: abs(tm[1] - target_mean_degree))
        raise CalibrationError(
            f"target mean degree {target_mean_degree} unattainable; "
            f"closest achieved {best[1]:.2f} at theta={best[0]:.4g}",
            theta=best[0], achieved=best[1], sweep=sorted(sweep))

    t_dense, t_sparse = lo_ok[0], hi_ok[0]
    for _ in range(max_bisect):
        theta = float(np.sqrt(t_dense * t_sparse))
        m = mean_degree(theta)
        if abs(m - target_mean_degree) <= window:
            return finish(theta, m)
        if m >= target_mean_degree:
            t_dense = theta
        else:
            t_sparse = theta
    best = min(sweep, key=lambda tm: abs(tm[1] - target_mean_degree))
    raise CalibrationError(
        f"bisection did not reach target {target_mean_degree} within "
        f"{max_bisect} steps; closest achieved {best[1]:.2f}",
        theta=best[0], achieved=best[1], sweep=sorted(sweep))


def learn_graph_oracle(z_mat: np.ndarray, alpha: float, beta: float,
                       tol: float = 1e-10, max_iter: int = 500_000) -> LearnedGraph:
    """Brute-force reference: projected gradient with a barrier-safe
    backtracking line search, run to a tiny relative change. Only for
    instances small enough to afford it."""
    z, i_idx, j_idx, n = _dense_edges(np.asarray(z_mat, dtype=np.float64))
    if n > 12:
        raise ValueError("oracle is restricted to N <= 12")

    def value(w):
        return _objective_edges(w, z, i_idx, j_idx, n, alpha, beta)

    def grad(w):
        deg = (np.bincount(i_idx, weights=w, minlength=n)
               + np.bincount(j_idx, weights=w, minlength=n))
        inv = alpha / deg
        return 2.0 * z - (inv[i_idx] + inv[j_idx]) + 4.0 * beta * w

    # per-edge closed form of the two-node problem gives an interior start
    w = (-z + np.sqrt(z * z + 8.0 * alpha * beta)) / (4.0 * beta)
    f = value(w)
    step = 1.0
    small_streak = 0
    for _ in range(max_iter):
        g = grad(w)
        while True:
            w_new = np.maximum(w - step * g, 0.0)
            f_new = value(w_new)
            d = w_new - w
            if np.isfinite(f_new) and f_new <= f + g @ d + (d @ d) / (2.0 * step) + 1e-15:
                break
            step *= 0.5
            if step < 1e-18:
                return _finish_oracle(w, f, z, i_idx, j_idx, n, alpha, beta)
        rel = abs(f - f_new) / max(1.0, abs(f))
        w, f = w_new, f_new
        step = min(step * 1.3, 1e8)
        small_streak = small_streak + 1 if rel < tol else 0
        if small_streak >= 5:
            break
    return _finish_oracle(w, f, z, i_idx, j_idx, n, alpha, beta)


def _finish_oracle(w, f, z, i_idx, j_idx, n, alpha, beta):
    keep = w > 0
    graph = SparseGraph.from_edges(n, i_idx[keep], j_idx[keep], w[keep])
    return LearnedGraph(graph, f, 0, True, [])
