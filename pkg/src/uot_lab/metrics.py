"""Reconstruction and distribution metrics."""
from __future__ import annotations

import numpy as np

from .core_math import Rng, as_batch
from .operators import CorruptionOp

__all__ = ["psnr", "sliced_wasserstein", "wasserstein_1d", "data_fidelity", "displacement", "PSNR_CEILING"]

PSNR_CEILING = 120.0


def psnr(x_hat, x_ref, data_range: float = 2.0) -> float:
    """``10 log10(range^2 / MSE)``; identical inputs return ``PSNR_CEILING``."""
    a = np.asarray(x_hat, dtype=np.float64)
    b = np.asarray(x_ref, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if data_range <= 0:
        raise ValueError("data_range must be > 0")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CEILING
    return float(min(PSNR_CEILING, 10.0 * np.log10(data_range**2 / mse)))


def wasserstein_1d(u, v) -> np.ndarray:
    """Exact squared W2 between empirical measures, column by column.

    ``u`` is ``(n, k)`` and ``v`` is ``(m, k)``; the quantile functions are
    compared on the union of their breakpoints.
    """
    u = np.sort(np.asarray(u, dtype=np.float64), axis=0)
    v = np.sort(np.asarray(v, dtype=np.float64), axis=0)
    n, m = u.shape[0], v.shape[0]
    cuts = np.union1d(np.arange(n + 1) / n, np.arange(m + 1) / m)
    widths = np.diff(cuts)
    mids = 0.5 * (cuts[1:] + cuts[:-1])
    iu = np.minimum((mids * n).astype(np.int64), n - 1)
    iv = np.minimum((mids * m).astype(np.int64), m - 1)
    return widths @ (u[iu] - v[iv]) ** 2


def sliced_wasserstein(a, b, n_proj: int = 128, rng: Rng | None = None) -> float:
    """Sliced W2 scaled by the dimension: ``sqrt(d * mean_theta W2^2(theta))``.

    The ``d`` factor makes it coincide with W2 for a translated isotropic
    Gaussian pair, and with plain W2 in one dimension.
    """
    a, _ = as_batch(a, name="a")
    b, _ = as_batch(b, a.shape[1], name="b")
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    rng = rng if rng is not None else Rng(0)
    d = a.shape[1]
    dirs = rng.normal((d, n_proj))
    dirs /= np.linalg.norm(dirs, axis=0, keepdims=True)
    w2 = wasserstein_1d(a @ dirs, b @ dirs)
    return float(np.sqrt(d * np.mean(w2)))


def _apply_map(transport, ys):
    if hasattr(transport, "predict"):
        return transport.predict(ys)
    if hasattr(transport, "transform"):
        return transport.transform(ys)
    return transport(ys)


def data_fidelity(op: CorruptionOp, transport, ys) -> float:
    """Mean ``||A(T(y)) - y||^2`` over the measurements."""
    y, _ = as_batch(ys, op.out_dim, name="ys")
    if y.shape[0] == 0:
        raise ValueError("ys must be nonempty")
    r = op.apply(_apply_map(transport, y)) - y
    return float(np.mean(np.sum(r * r, axis=1)))


def displacement(transport, ys) -> float:
    """Mean ``||T(y) - y||^2`` (equal dimensions only)."""
    y, _ = as_batch(ys, name="ys")
    d = _apply_map(transport, y) - y
    return float(np.mean(np.sum(d * d, axis=1)))
