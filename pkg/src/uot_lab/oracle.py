"""Reference solvers used to check learned maps.

* exact discrete OT (Hungarian assignment, LP for general weights)
* entropic unbalanced OT via log-domain generalised Sinkhorn
* closed-form OT between isotropic Gaussians
* grid-based injectivity check of ``x -> lam * x + A(x)``
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from .core_math import as_batch, as_mat, as_vec
from .operators import CorruptionOp

__all__ = [
    "DiscreteMeasure",
    "TransportPlan",
    "hungarian",
    "brute_force_assignment",
    "solve_ot_exact",
    "sinkhorn_log",
    "solve_uot_entropic",
    "uot_primal_objective",
    "GaussianOTMap",
    "gaussian_ot_map",
    "TwistVerdict",
    "twist_check",
    "grid_2d",
    "cost_inequality_check",
    "SinkhornNotConverged",
]


class SinkhornNotConverged(RuntimeError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"Sinkhorn did not converge in {iterations} iterations (marginal change {residual:.3e})")


@dataclass
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points, _ = as_batch(self.points, name="points")
        self.weights = as_vec(self.weights, name="weights")
        if self.weights.shape[0] != self.points.shape[0]:
            raise ValueError("one weight per point required")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @classmethod
    def uniform(cls, points):
        points, _ = as_batch(points, name="points")
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))

    def __len__(self):
        return self.points.shape[0]

    @property
    def mass(self):
        return float(self.weights.sum())


@dataclass
class TransportPlan:
    matrix: np.ndarray
    marginal_src: np.ndarray = None
    marginal_tgt: np.ndarray = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if np.any(self.matrix < 0):
            raise ValueError("transport plans are nonnegative")
        self.marginal_src = self.matrix.sum(axis=1)
        self.marginal_tgt = self.matrix.sum(axis=0)

    @property
    def mass(self):
        return float(self.matrix.sum())

    def transport_cost(self, cost_matrix) -> float:
        return float(np.sum(self.matrix * cost_matrix))

    def to_csv(self, path):
        path = Path(path)
        np.savetxt(path, self.matrix, delimiter=",", fmt="%.17g")
        return path


# ---------------------------------------------------------------------------
# exact OT


def hungarian(cost) -> np.ndarray:
    """Minimum-cost perfect assignment of a square matrix.

    Shortest augmenting paths with row/column potentials, O(n^3).
    Returns ``assign`` with ``assign[i]`` the column matched to row ``i``.
    """
    c = as_mat(cost, name="cost")
    n, m = c.shape
    if n != m:
        raise ValueError("hungarian expects a square cost matrix")
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = row (1-based) assigned to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = c[i0 - 1, :] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    assign = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assign[match[j] - 1] = j - 1
    return assign


def brute_force_assignment(cost):
    """Exhaustive minimum over all permutations (small ``n`` only)."""
    c = as_mat(cost, name="cost")
    n = c.shape[0]
    if n > 9:
        raise ValueError("brute force limited to n <= 9")
    best, best_perm = np.inf, None
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        val = c[rows, perm].sum()
        if val < best:
            best, best_perm = val, perm
    return float(best), np.array(best_perm)


def _check_balanced(src, tgt):
    if abs(src.mass - tgt.mass) > 1e-9 or abs(src.mass - 1.0) > 1e-9:
        raise ValueError(
            f"exact OT needs balanced unit-mass measures (got {src.mass:.12g} and {tgt.mass:.12g}); use solve_uot_entropic"
        )


def solve_ot_exact(src: DiscreteMeasure, tgt: DiscreteMeasure, cost_matrix) -> TransportPlan:
    """Exact balanced OT plan: assignment for uniform square problems, LP otherwise."""
    _check_balanced(src, tgt)
    c = as_mat(cost_matrix, name="cost_matrix")
    n, m = len(src), len(tgt)
    if c.shape != (n, m):
        raise ValueError(f"cost matrix shape {c.shape} does not match measures ({n}, {m})")
    if n > 256 or m > 256:
        raise ValueError("exact OT limited to 256 points per side")
    uniform = n == m and np.allclose(src.weights, 1.0 / n, rtol=0, atol=1e-15) and np.allclose(tgt.weights, 1.0 / m, rtol=0, atol=1e-15)
    if uniform:
        assign = hungarian(c)
        plan = np.zeros((n, m))
        plan[np.arange(n), assign] = 1.0 / n
        return TransportPlan(plan, info={"method": "assignment"})
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([src.weights, tgt.weights])
    res = linprog(c.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    return TransportPlan(np.maximum(res.x.reshape(n, m), 0.0), info={"method": "lp"})


# ---------------------------------------------------------------------------
# entropic (unbalanced) OT


def _kl(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p / q), 0.0)
    return float(np.sum(terms - p + q))


def uot_primal_objective(plan, a, b, cost_matrix, eps, rho1, rho2) -> float:
    """``<C, P> + eps KL(P | a b^T) + rho1 KL(P 1 | a) + rho2 KL(P^T 1 | b)``."""
    p = np.asarray(plan, dtype=np.float64)
    return (
        float(np.sum(p * cost_matrix))
        + eps * _kl(p, np.outer(a, b))
        + rho1 * _kl(p.sum(axis=1), a)
        + rho2 * _kl(p.sum(axis=0), b)
    )


def _dual_objective(f, g, a, b, cost, eps, rho1, rho2):
    def phi(h, rho):
        return -rho * np.expm1(-h / rho) if np.isfinite(rho) else h

    pairs = np.exp((f[:, None] + g[None, :] - cost) / eps)
    return float(a @ phi(f, rho1) + b @ phi(g, rho2) - eps * (a @ (pairs - 1.0) @ b))


def _generalized_sinkhorn(a, b, cost, eps, rho1, rho2, tol, max_iter, f=None, g=None):
    log_a, log_b = np.log(a), np.log(b)
    lam1 = 1.0 if np.isinf(rho1) else rho1 / (rho1 + eps)
    lam2 = 1.0 if np.isinf(rho2) else rho2 / (rho2 + eps)
    f = np.zeros_like(a) if f is None else f
    g = np.zeros_like(b) if g is None else g
    prev_src = prev_tgt = None
    duals = []
    residual = np.inf
    for it in range(1, max_iter + 1):
        f = -lam1 * eps * logsumexp((g[None, :] - cost) / eps + log_b[None, :], axis=1)
        g = -lam2 * eps * logsumexp((f[:, None] - cost) / eps + log_a[:, None], axis=0)
        log_plan = (f[:, None] + g[None, :] - cost) / eps + log_a[:, None] + log_b[None, :]
        src = np.exp(logsumexp(log_plan, axis=1))
        tgt = np.exp(logsumexp(log_plan, axis=0))
        duals.append(_dual_objective(f, g, a, b, cost, eps, rho1, rho2))
        if prev_src is not None:
            residual = max(np.max(np.abs(src - prev_src)), np.max(np.abs(tgt - prev_tgt)))
            if residual < tol:
                return np.exp(log_plan), f, g, it, residual, duals
        prev_src, prev_tgt = src, tgt
    raise SinkhornNotConverged(max_iter, residual)


def sinkhorn_log(a, b, cost_matrix, eps, tol=1e-9, max_iter=100_000) -> TransportPlan:
    """Balanced entropic OT (plain log-domain Sinkhorn, no warm start)."""
    a, b, c = as_vec(a, "a"), as_vec(b, "b"), as_mat(cost_matrix, "cost_matrix")
    plan, f, g, it, res, duals = _generalized_sinkhorn(a, b, c, eps, np.inf, np.inf, tol, max_iter)
    return TransportPlan(plan, info={"iterations": it, "residual": res, "f": f, "g": g, "dual": duals})


def solve_uot_entropic(
    src, tgt, cost_matrix, eps=0.01, rho1=1.0, rho2=1.0, tol=1e-9, max_iter=10_000, eps_scaling=True
) -> TransportPlan:
    """Entropic UOT with KL marginal penalties of strength ``rho1`` / ``rho2``.

    Log-domain scaling iterations ``f <- -rho1/(rho1+eps) * eps * log sum_j b_j exp((g_j - C_ij)/eps)``
    and symmetrically for ``g``; stops once the plan marginals change by less
    than ``tol`` between sweeps. With ``eps_scaling`` the potentials are first
    warmed up on a decreasing ladder of larger regularisations.
    """
    if eps <= 0 or rho1 <= 0 or rho2 <= 0:
        raise ValueError("eps, rho1 and rho2 must be positive")
    c = as_mat(cost_matrix, name="cost_matrix")
    n, m = len(src), len(tgt)
    if c.shape != (n, m):
        raise ValueError(f"cost matrix shape {c.shape} does not match measures ({n}, {m})")
    if n > 512 or m > 512:
        raise ValueError("entropic solver limited to 512 points per side")
    a, b = src.weights, tgt.weights
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("entropic solver needs strictly positive weights")
    f0 = g0 = None
    if eps_scaling:
        # warm start from coarser regularisation; only the final stage is capped by max_iter
        scale = float(np.max(c) - np.min(c))
        level = scale
        while level > 4.0 * eps:
            try:
                _, f0, g0, *_ = _generalized_sinkhorn(a, b, c, level, rho1, rho2, 1e-6, max_iter, f0, g0)
            except SinkhornNotConverged:
                pass
            level /= 4.0
    plan, f, g, it, res, duals = _generalized_sinkhorn(a, b, c, eps, rho1, rho2, tol, max_iter, f0, g0)
    return TransportPlan(
        plan,
        info={"iterations": it, "residual": res, "f": f, "g": g, "dual": duals, "eps": eps, "rho1": rho1, "rho2": rho2},
    )


# ---------------------------------------------------------------------------
# closed forms


class GaussianOTMap(NamedTuple):
    scale: float
    shift: np.ndarray
    sq_cost: float

    def __call__(self, y):
        return self.scale * np.asarray(y, dtype=np.float64) + self.shift


def gaussian_ot_map(m1, m2, s1: float, s2: float) -> GaussianOTMap:
    """Quadratic-cost OT map ``y -> (s2/s1) y + (m2 - (s2/s1) m1)`` between isotropic Gaussians.

    ``sq_cost`` is ``||m1 - m2||^2 + d (s1 - s2)^2``.
    """
    if s1 <= 0 or s2 <= 0:
        raise ValueError("Gaussian scales must be positive")
    m1 = np.atleast_1d(np.asarray(m1, dtype=np.float64))
    m2 = np.atleast_1d(np.asarray(m2, dtype=np.float64))
    if m1.shape != m2.shape:
        raise ValueError("means must share a dimension")
    a = s2 / s1
    d = m1.shape[0]
    return GaussianOTMap(a, m2 - a * m1, float(np.sum((m1 - m2) ** 2) + d * (s1 - s2) ** 2))


# ---------------------------------------------------------------------------
# twist condition


class TwistVerdict(NamedTuple):
    injective: bool
    pair: tuple | None = None

    def __str__(self):
        if self.injective:
            return "Injective"
        x1, x2 = self.pair
        fmt = lambda p: "(" + ", ".join(f"{float(v):.12g}" for v in p) + ")"
        return f"CollisionFound({fmt(x1)}, {fmt(x2)})"


def grid_2d(lo=-2.0, hi=2.0, n=41) -> np.ndarray:
    ticks = np.linspace(lo, hi, n)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def twist_check(op: CorruptionOp, lam: float, grid, tol: float = 1e-9, chunk: int = 256) -> TwistVerdict:
    """Search the grid for two points that ``g(x) = lam * x + A(x)`` fails to separate.

    A pair collides when ``||g(x1) - g(x2)|| < tol * ||x1 - x2||`` while
    ``||x1 - x2|| > tol``. Returns the first collision in grid order.
    """
    if op.in_dim != op.out_dim:
        raise ValueError("twist check needs equal input and output dimensions")
    pts, _ = as_batch(grid, op.in_dim, name="grid")
    if pts.shape[0] == 0:
        raise ValueError("grid must be nonempty")
    g = lam * pts + op.apply(pts)
    n = pts.shape[0]
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        dx = np.linalg.norm(pts[start:stop, None, :] - pts[None, :, :], axis=2)
        dg = np.linalg.norm(g[start:stop, None, :] - g[None, :, :], axis=2)
        hit = (dx > tol) & (dg < tol * dx)
        hit &= np.arange(n)[None, :] > np.arange(start, stop)[:, None]
        if hit.any():
            i, j = np.argwhere(hit)[0]
            return TwistVerdict(False, (pts[start + i].copy(), pts[j].copy()))
    return TwistVerdict(True, None)


def cost_inequality_check(src, tgt, cost_matrix, eps=0.01, rho=1.0):
    """Transport-cost terms ``(<C, P_ot>, <C, P_uot>)`` on one instance."""
    ot = solve_ot_exact(src, tgt, cost_matrix)
    uot = solve_uot_entropic(src, tgt, cost_matrix, eps, rho, rho)
    return ot.transport_cost(cost_matrix), uot.transport_cost(cost_matrix)
