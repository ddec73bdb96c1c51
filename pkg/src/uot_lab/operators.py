"""Forward corruption operators ``A`` with Jacobian-transpose products.

Every operator maps a batch ``(n, in_dim)`` to ``(n, out_dim)``; single vectors
are accepted too. Linear operators carry an explicit dense matrix, which keeps
adjoints exact at the signal sizes used here (length <= a few hundred).
"""
from __future__ import annotations

import numpy as np

from .core_math import Rng, as_batch, as_mat

__all__ = [
    "CorruptionOp",
    "LinearOp",
    "Identity",
    "LinearMatrix",
    "Projection",
    "Blur1D",
    "Downsample",
    "HdrClip",
    "AnalyticNonlinear",
    "Interp",
    "gaussian_kernel",
    "circulant",
    "build_operator",
    "OPERATOR_KINDS",
]


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalised samples of ``exp(-i^2 / 2 sigma^2)`` on a centred odd grid."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if sigma <= 0:
        raise ValueError("kernel sigma must be > 0")
    r = size // 2
    i = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(i * i) / (2.0 * sigma * sigma))
    return k / k.sum()


def circulant(kernel, n: int) -> np.ndarray:
    """Dense matrix of circular convolution with a centred kernel."""
    kernel = np.asarray(kernel, dtype=np.float64)
    r = kernel.size // 2
    if kernel.size > n:
        raise ValueError("kernel longer than the signal")
    m = np.zeros((n, n))
    rows = np.arange(n)
    for j, w in enumerate(kernel):
        m[rows, (rows + j - r) % n] += w
    return m


class CorruptionOp:
    """Base class. Subclasses implement ``_apply`` and ``_jt`` on batches."""

    kind = "abstract"
    is_linear = False

    def __init__(self, in_dim: int, out_dim: int):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("operator dimensions must be positive")
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)

    def __repr__(self):
        return f"{type(self).__name__}(in_dim={self.in_dim}, out_dim={self.out_dim})"

    def apply(self, x):
        xb, single = as_batch(x, self.in_dim, name="x")
        out = self._apply(xb)
        return out[0] if single else out

    __call__ = apply

    def jacobian_transpose_apply(self, x, u):
        """``J_A(x)^T u`` for each row of the batch."""
        xb, single = as_batch(x, self.in_dim, name="x")
        ub, _ = as_batch(u, self.out_dim, name="u")
        if ub.shape[0] != xb.shape[0]:
            raise ValueError("x and u batch sizes differ")
        out = self._jt(xb, ub)
        return out[0] if single else out

    def lipschitz_estimate(self, n_probe: int = 1000, rng: Rng | None = None) -> float:
        """Lipschitz constant: exact spectral norm for linear kinds, a probed
        lower bound otherwise."""
        if n_probe < 1:
            raise ValueError("n_probe must be >= 1")
        rng = rng if rng is not None else Rng(0)
        if self.is_linear:
            return spectral_norm(self.matrix, rng)
        half = max(1, n_probe // 2)
        x1 = 2.0 * rng.uniform((n_probe, self.in_dim)) - 1.0
        x2 = 2.0 * rng.uniform((n_probe, self.in_dim)) - 1.0
        # near pairs capture local slopes that far pairs average out
        x2[:half] = x1[:half] + 1e-4 * rng.normal((half, self.in_dim))
        num = np.linalg.norm(self._apply(x1) - self._apply(x2), axis=1)
        den = np.linalg.norm(x1 - x2, axis=1)
        keep = den > 0
        return float(np.max(num[keep] / den[keep]))

    def config(self) -> dict:
        return {"kind": self.kind}


class LinearOp(CorruptionOp):
    is_linear = True

    def __init__(self, matrix):
        matrix = as_mat(matrix, name="matrix")
        super().__init__(matrix.shape[1], matrix.shape[0])
        self.matrix = matrix

    def _apply(self, x):
        return x @ self.matrix.T

    def _jt(self, x, u):
        return u @ self.matrix


class Identity(LinearOp):
    kind = "identity"

    def __init__(self, dim: int):
        super().__init__(np.eye(int(dim)))

    def config(self):
        return {"kind": self.kind, "dim": self.in_dim}


class LinearMatrix(LinearOp):
    kind = "linear_matrix"

    def config(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}


class Projection(LinearOp):
    """Collapse R^2 onto the first axis along the direction (1, -1)."""

    kind = "projection"

    def __init__(self):
        super().__init__(np.array([[1.0, 1.0], [0.0, 0.0]]))


class Blur1D(LinearOp):
    """Circular convolution with a normalised Gaussian kernel."""

    kind = "blur1d"

    def __init__(self, dim: int = 64, kernel_size: int = 9, sigma: float = 3.0 * 9 / 61):
        self.kernel = gaussian_kernel(kernel_size, sigma)
        self.sigma = float(sigma)
        super().__init__(circulant(self.kernel, int(dim)))

    def config(self):
        return {"kind": self.kind, "dim": self.in_dim, "kernel_size": int(self.kernel.size), "sigma": self.sigma}


class Downsample(LinearOp):
    """Average over non-overlapping blocks of ``factor`` samples."""

    kind = "downsample"

    def __init__(self, dim: int = 64, factor: int = 4):
        dim, factor = int(dim), int(factor)
        if factor < 1 or dim % factor:
            raise ValueError(f"signal length {dim} is not divisible by factor {factor}")
        m = np.zeros((dim // factor, dim))
        for i in range(dim // factor):
            m[i, i * factor:(i + 1) * factor] = 1.0 / factor
        self.factor = factor
        super().__init__(m)

    def config(self):
        return {"kind": self.kind, "dim": self.in_dim, "factor": self.factor}


class HdrClip(CorruptionOp):
    """Entrywise ``clip(scale * x, -1, 1)``; slope is zero on and beyond the kink."""

    kind = "hdr_clip"

    def __init__(self, dim: int = 64, scale: float = 2.0):
        super().__init__(dim, dim)
        self.scale = float(scale)

    def _apply(self, x):
        return np.clip(self.scale * x, -1.0, 1.0)

    def _jt(self, x, u):
        return self.scale * u * (np.abs(self.scale * x) < 1.0)

    def config(self):
        return {"kind": self.kind, "dim": self.in_dim, "scale": self.scale}


class AnalyticNonlinear(CorruptionOp):
    """``s * tanh(x) + k * blur(x)``: a smooth nonlinear blur with Lipschitz bound ``s + k``."""

    kind = "analytic_nonlinear"

    def __init__(self, dim: int = 64, s: float = 0.5, kappa: float = 0.5, kernel_size: int = 9, sigma: float = 1.5):
        super().__init__(dim, dim)
        self.s = float(s)
        self.kappa = float(kappa)
        self.blur = Blur1D(dim, kernel_size, sigma)

    def _apply(self, x):
        return self.s * np.tanh(x) + self.kappa * self.blur._apply(x)

    def _jt(self, x, u):
        t = np.tanh(x)
        return self.s * (1.0 - t * t) * u + self.kappa * self.blur._jt(x, u)

    def config(self):
        return {
            "kind": self.kind,
            "dim": self.in_dim,
            "s": self.s,
            "kappa": self.kappa,
            "kernel_size": int(self.blur.kernel.size),
            "sigma": self.blur.sigma,
        }


def spectral_norm(matrix, rng: Rng, tol: float = 1e-10, max_iter: int = 200_000) -> float:
    """Largest singular value by power iteration on ``M^T M``.

    Stops once the eigen-residual ``||M^T M v - lam v||`` falls below ``tol * lam``.
    """
    m = np.asarray(matrix, dtype=np.float64)
    gram = m.T @ m
    v = rng.normal(m.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        lam = float(v @ w)
        if lam <= 0.0:
            return 0.0
        if np.linalg.norm(w - lam * v) <= tol * lam:
            break
        v = w / np.linalg.norm(w)
    return float(np.sqrt(lam))


def _keys_cubic(t, a=-0.5):
    t = np.abs(t)
    w = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    w[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    w[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return w


class Interp:
    """Upsampling by an integer factor with circular boundaries.

    ``mode='cubic'`` uses Keys cubic convolution (the 1-D analogue of bicubic),
    ``mode='linear'`` uses linear interpolation. Both reproduce constants.
    """

    def __init__(self, factor: int = 4, mode: str = "cubic"):
        if int(factor) < 1:
            raise ValueError("factor must be >= 1")
        if mode not in ("cubic", "linear"):
            raise ValueError(f"mode must be 'cubic' or 'linear', got {mode!r}")
        self.factor = int(factor)
        self.mode = mode
        self._cache = {}

    def __repr__(self):
        return f"Interp(factor={self.factor}, mode={self.mode!r})"

    def matrix(self, n: int) -> np.ndarray:
        if n not in self._cache:
            f = self.factor
            q = np.zeros((n * f, n))
            for i in range(n * f):
                p = (i + 0.5) / f - 0.5
                base = int(np.floor(p))
                if self.mode == "cubic":
                    taps = np.arange(base - 1, base + 3)
                    w = _keys_cubic(p - taps)
                else:
                    taps = np.arange(base, base + 2)
                    w = 1.0 - np.abs(p - taps)
                for j, wj in zip(taps, w):
                    q[i, j % n] += wj
            self._cache[n] = q
        return self._cache[n]

    def up(self, y):
        yb, single = as_batch(y, name="y")
        out = yb @ self.matrix(yb.shape[1]).T
        return out[0] if single else out

    def up_transpose(self, u, n: int):
        ub, single = as_batch(u, n * self.factor, name="u")
        out = ub @ self.matrix(n)
        return out[0] if single else out

    def down(self, x):
        xb, single = as_batch(x, name="x")
        n = xb.shape[1]
        if n % self.factor:
            raise ValueError("length not divisible by factor")
        out = xb.reshape(xb.shape[0], n // self.factor, self.factor).mean(axis=2)
        return out[0] if single else out

    def config(self):
        return {"factor": self.factor, "mode": self.mode}


_BUILDERS = {
    "identity": lambda p: Identity(p.get("dim", 2)),
    "linear_matrix": lambda p: LinearMatrix(p["matrix"]),
    "projection": lambda p: Projection(),
    "blur1d": lambda p: Blur1D(p.get("dim", 64), p.get("kernel_size", 9), p.get("sigma", 3.0 * 9 / 61)),
    "downsample": lambda p: Downsample(p.get("dim", 64), p.get("factor", 4)),
    "hdr_clip": lambda p: HdrClip(p.get("dim", 64), p.get("scale", 2.0)),
    "analytic_nonlinear": lambda p: AnalyticNonlinear(
        p.get("dim", 64), p.get("s", 0.5), p.get("kappa", 0.5), p.get("kernel_size", 9), p.get("sigma", 1.5)
    ),
}
OPERATOR_KINDS = tuple(_BUILDERS)


def build_operator(kind: str, **params) -> CorruptionOp:
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {OPERATOR_KINDS}") from None
    return builder(params)
