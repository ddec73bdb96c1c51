"""Transport costs ``tau * (c_l + lam * c_q)`` and marginal-penalty conjugates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_math import as_batch
from .errors import CostDomainError, DivergenceError
from .operators import CorruptionOp, Interp

__all__ = [
    "CostSpec",
    "DivergenceConj",
    "LIKELIHOODS",
    "cost",
    "cost_grad_x",
    "cost_grad_y",
    "cost_matrix",
    "KL",
    "IDENTITY",
    "CONJ_OVERFLOW",
]

LIKELIHOODS = ("gaussian", "laplace", "poisson")
# 8-bit convention used by the Poisson likelihood: y in [-1, 1] -> (y + 1) * 127.5
_PIXEL = 127.5
CONJ_OVERFLOW = 30.0


@dataclass(frozen=True)
class CostSpec:
    """Cost ``c(y, x) = tau * (c_l(y, x) + quad_weight * c_q(y, x))``.

    ``c_l`` compares ``A(x)`` with the measurement ``y`` using the chosen
    likelihood. ``c_q = ||y - x||^2``, or ``||Q(y) - x||^2`` through ``interp``
    when measurement and signal dimensions differ.
    """

    op: CorruptionOp
    tau: float = 1e-3
    use_likelihood: bool = True
    use_quadratic: bool = True
    likelihood: str = "gaussian"
    quad_weight: float = 1.0
    interp: Interp | None = None

    def __post_init__(self):
        if not (self.tau > 0):
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not (self.use_likelihood or self.use_quadratic):
            raise ValueError("at least one of use_likelihood / use_quadratic must be set")
        if self.likelihood not in LIKELIHOODS:
            raise ValueError(f"likelihood must be one of {LIKELIHOODS}, got {self.likelihood!r}")
        if self.quad_weight < 0:
            raise ValueError("quad_weight must be >= 0")
        mismatched = self.op.in_dim != self.op.out_dim
        if self.use_quadratic and mismatched and self.interp is None:
            raise ValueError("quadratic term on mismatched dimensions needs an interp")
        if self.interp is not None and not (self.use_quadratic and mismatched):
            raise ValueError("interp is only valid for a quadratic term on mismatched dimensions")
        if self.interp is not None and self.op.out_dim * self.interp.factor != self.op.in_dim:
            raise ValueError("interp factor does not map measurement length onto signal length")

    @property
    def y_dim(self):
        return self.op.out_dim

    @property
    def x_dim(self):
        return self.op.in_dim

    def with_terms(self, use_likelihood, use_quadratic):
        interp = self.interp if use_quadratic else None
        return CostSpec(self.op, self.tau, use_likelihood, use_quadratic, self.likelihood, self.quad_weight, interp)


def _prepare(spec, y, x):
    yb, single_y = as_batch(y, spec.y_dim, name="y")
    xb, single_x = as_batch(x, spec.x_dim, name="x")
    if yb.shape[0] != xb.shape[0]:
        raise ValueError(f"batch sizes differ: {yb.shape[0]} measurements vs {xb.shape[0]} signals")
    return yb, xb, single_y and single_x


def _poisson_weights(y):
    counts = (y + 1.0) * _PIXEL
    if np.any(counts <= 0):
        raise CostDomainError("Poisson likelihood needs strictly positive measurements on the 0-255 scale")
    # Lambda_ii = 1 / (2 y_i) on the integer scale, residual scaled alongside
    return _PIXEL * _PIXEL / (2.0 * counts)


def _anchor(spec, y):
    return spec.interp.up(y) if spec.interp is not None else y


def cost(spec: CostSpec, y, x):
    """Per-pair cost; a scalar for single vectors, shape ``(n,)`` for batches."""
    yb, xb, single = _prepare(spec, y, x)
    total = np.zeros(yb.shape[0])
    if spec.use_likelihood:
        r = spec.op.apply(xb) - yb
        if spec.likelihood == "gaussian":
            total += np.sum(r * r, axis=1)
        elif spec.likelihood == "laplace":
            total += np.sum(np.abs(r), axis=1)
        else:
            total += np.sum(_poisson_weights(yb) * r * r, axis=1)
    if spec.use_quadratic:
        q = xb - _anchor(spec, yb)
        total += spec.quad_weight * np.sum(q * q, axis=1)
    total *= spec.tau
    return float(total[0]) if single else total


def cost_grad_x(spec: CostSpec, y, x):
    yb, xb, single = _prepare(spec, y, x)
    g = np.zeros_like(xb)
    if spec.use_likelihood:
        r = spec.op.apply(xb) - yb
        if spec.likelihood == "gaussian":
            u = 2.0 * r
        elif spec.likelihood == "laplace":
            u = np.sign(r)
        else:
            u = 2.0 * _poisson_weights(yb) * r
        g += spec.op.jacobian_transpose_apply(xb, u)
    if spec.use_quadratic:
        g += 2.0 * spec.quad_weight * (xb - _anchor(spec, yb))
    g *= spec.tau
    return g[0] if single else g


def cost_grad_y(spec: CostSpec, y, x):
    """``tau * (2 (y - A(x)) + 2 lam (y - x))`` for the Gaussian, equal-dimension case."""
    if spec.likelihood != "gaussian" or spec.x_dim != spec.y_dim:
        raise ValueError("cost_grad_y supports the Gaussian likelihood with equal dimensions only")
    yb, xb, single = _prepare(spec, y, x)
    g = np.zeros_like(yb)
    if spec.use_likelihood:
        g += 2.0 * (yb - spec.op.apply(xb))
    if spec.use_quadratic:
        g += 2.0 * spec.quad_weight * (yb - xb)
    g *= spec.tau
    return g[0] if single else g


def cost_matrix(spec: CostSpec, ys, xs) -> np.ndarray:
    """Dense matrix ``C[i, j] = c(ys[i], xs[j])`` evaluated with :func:`cost`."""
    yb, _ = as_batch(ys, spec.y_dim, name="ys")
    xb, _ = as_batch(xs, spec.x_dim, name="xs")
    n, m = yb.shape[0], xb.shape[0]
    flat = cost(spec, np.repeat(yb, m, axis=0), np.tile(xb, (n, 1)))
    return np.asarray(flat).reshape(n, m)


class DivergenceConj:
    """Convex conjugate of the marginal penalty generator.

    ``'kl'`` gives ``t -> exp(t) - 1`` (the unbalanced case), ``'identity'``
    gives ``t -> t`` which recovers balanced OT.
    """

    def __init__(self, kind: str = "kl"):
        if kind not in ("kl", "identity"):
            raise ValueError(f"divergence kind must be 'kl' or 'identity', got {kind!r}")
        self.kind = kind

    def __repr__(self):
        return f"DivergenceConj({self.kind!r})"

    def __eq__(self, other):
        return isinstance(other, DivergenceConj) and other.kind == self.kind

    def __hash__(self):
        return hash(self.kind)

    def _guard(self, t):
        t = np.asarray(t, dtype=np.float64)
        if not np.all(np.isfinite(t)):
            raise DivergenceError("non-finite conjugate argument")
        if self.kind == "kl" and np.any(t > CONJ_OVERFLOW):
            raise DivergenceError(f"conjugate argument {float(np.max(t)):.3g} exceeds {CONJ_OVERFLOW}; potential divergence")
        return t

    def __call__(self, t):
        t = self._guard(t)
        out = np.expm1(t) if self.kind == "kl" else t.copy()
        return float(out) if out.ndim == 0 else out

    def deriv(self, t):
        t = self._guard(t)
        out = np.exp(t) if self.kind == "kl" else np.ones_like(t)
        return float(out) if out.ndim == 0 else out


KL = DivergenceConj("kl")
IDENTITY = DivergenceConj("identity")
