"""Dense linear algebra helpers, a portable seeded PRNG and noise samplers.

The generator is xoshiro256++ seeded through splitmix64, so every stream is
reproducible bit-for-bit on any platform. Bulk generation runs in numba.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = [
    "Rng",
    "as_vec",
    "as_mat",
    "as_batch",
    "matvec",
    "sample_gaussian",
    "sample_laplace",
    "laplace_inverse_cdf",
    "apply_poisson_noise",
    "POISSON_KNUTH_LIMIT",
]

_MASK64 = (1 << 64) - 1
_JUMP = (0x180EC6D33CFD0ABA, 0xD5A61266F0C9392C, 0xA9582618E03FC9AA, 0x39ABDC4529B1661C)

# Knuth's multiplication method below this mean, rounded normal above.
POISSON_KNUTH_LIMIT = 30.0


# ---------------------------------------------------------------------------
# validation helpers


def as_vec(v, name="v") -> np.ndarray:
    """Return ``v`` as a finite 1-D float64 array or raise ``ValueError``."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_mat(m, name="m") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_batch(x, dim=None, name="x"):
    """Coerce ``x`` to a 2-D batch ``(n, dim)``.

    Returns the batch and a flag telling whether the input was a single vector,
    so callers can squeeze their result back.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a vector or a 2-D batch, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[1]}, expected {dim}")
    return arr, single


def matvec(m, v) -> np.ndarray:
    m = as_mat(m)
    v = as_vec(v)
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: matrix has {m.shape[1]} columns, vector has {v.shape[0]} entries")
    return m @ v


# ---------------------------------------------------------------------------
# xoshiro256++ kernels


@njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def _next(s):
    result = _rotl(s[0] + s[3], 23) + s[0]
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True)
def _fill_u64(s, out):
    for i in range(out.shape[0]):
        out[i] = _next(s)


@njit(cache=True)
def _fill_open_uniform(s, out):
    # (k + 0.5) / 2**53 lies strictly inside (0, 1)
    for i in range(out.shape[0]):
        k = _next(s) >> np.uint64(11)
        out[i] = (np.float64(k) + 0.5) * 1.1102230246251565e-16


@njit(cache=True)
def _fill_normal(s, out):
    # Box-Muller, both outputs of each pair are used
    n = out.shape[0]
    i = 0
    while i < n:
        u1 = (np.float64(_next(s) >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16
        u2 = (np.float64(_next(s) >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16
        r = math.sqrt(-2.0 * math.log(u1))
        out[i] = r * math.cos(2.0 * math.pi * u2)
        if i + 1 < n:
            out[i + 1] = r * math.sin(2.0 * math.pi * u2)
        i += 2


@njit(cache=True)
def _fill_poisson(s, lam, out, limit):
    for i in range(lam.shape[0]):
        m = lam[i]
        if m <= 0.0:
            out[i] = 0.0
        elif m < limit:
            floor = math.exp(-m)
            k = 0
            p = (np.float64(_next(s) >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16
            while p > floor:
                k += 1
                p *= (np.float64(_next(s) >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16
            out[i] = k
        else:
            u1 = (np.float64(_next(s) >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16
            u2 = (np.float64(_next(s) >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16
            z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
            out[i] = max(0.0, math.floor(m + math.sqrt(m) * z + 0.5))


def _splitmix64(x: int):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def _seed_state(seed: int) -> np.ndarray:
    x = int(seed) & _MASK64
    words = []
    for _ in range(4):
        x, z = _splitmix64(x)
        words.append(z)
    return np.array(words, dtype=np.uint64)


def _size(size) -> tuple:
    if isinstance(size, (int, np.integer)):
        size = (int(size),)
    size = tuple(int(s) for s in size)
    if any(s < 0 for s in size):
        raise ValueError(f"negative size {size}")
    return size


class Rng:
    """xoshiro256++ generator seeded through splitmix64.

    ``stream(k)`` returns an independent substream: the seeded state jumped
    ``k`` times by 2**128 steps, regardless of how much this generator has
    already consumed.
    """

    def __init__(self, seed: int = 0, *, state=None):
        self.seed = int(seed)
        if state is None:
            state = _seed_state(seed)
        self._origin = np.array(state, dtype=np.uint64)
        self._state = self._origin.copy()
        if not self._state.any():
            raise ValueError("xoshiro256++ state must not be all zero")

    @classmethod
    def from_state(cls, state) -> "Rng":
        return cls(0, state=np.array(state, dtype=np.uint64))

    @property
    def state(self) -> np.ndarray:
        return self._state.copy()

    def __repr__(self):
        return f"Rng(seed={self.seed})"

    def next_u64(self, n: int = 1) -> np.ndarray:
        out = np.empty(int(n), dtype=np.uint64)
        _fill_u64(self._state, out)
        return out

    def uniform(self, size=1) -> np.ndarray:
        """Doubles strictly inside ``(0, 1)``."""
        shape = _size(size)
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        _fill_open_uniform(self._state, out)
        return out.reshape(shape)

    def normal(self, size=1) -> np.ndarray:
        shape = _size(size)
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        _fill_normal(self._state, out)
        return out.reshape(shape)

    def integers(self, high: int, size=1) -> np.ndarray:
        if high < 1:
            raise ValueError("high must be >= 1")
        idx = np.floor(self.uniform(size) * high).astype(np.int64)
        return np.minimum(idx, high - 1)

    def poisson(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=np.float64)
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("Poisson means must be finite and nonnegative")
        out = np.empty(lam.size, dtype=np.float64)
        _fill_poisson(self._state, lam.ravel(), out, POISSON_KNUTH_LIMIT)
        return out.reshape(lam.shape)

    def stream(self, k: int) -> "Rng":
        if k < 0:
            raise ValueError("stream index must be nonnegative")
        s = [int(w) for w in self._origin]
        for _ in range(int(k)):
            s = _jump(s)
        child = Rng.from_state(np.array(s, dtype=np.uint64))
        child.seed = self.seed
        return child


def _jump(s):
    """Advance a xoshiro256 state by 2**128 steps."""
    s = np.array(s, dtype=np.uint64)
    acc = [0, 0, 0, 0]
    for word in _JUMP:
        for b in range(64):
            if (word >> b) & 1:
                acc = [a ^ int(w) for a, w in zip(acc, s)]
            _next(s)
    return acc


# ---------------------------------------------------------------------------
# noise models


def sample_gaussian(rng: Rng, dim, sigma: float) -> np.ndarray:
    """I.i.d. ``N(0, sigma^2)`` entries drawn with Box-Muller."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    z = rng.normal(dim)
    return z * sigma


def laplace_inverse_cdf(u, b: float):
    u = np.asarray(u, dtype=np.float64) - 0.5
    return -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def sample_laplace(rng: Rng, dim, b: float) -> np.ndarray:
    """I.i.d. Laplace(0, b) entries via the inverse CDF; variance is ``2 b^2``."""
    if b < 0:
        raise ValueError(f"Laplace scale must be >= 0, got {b}")
    return laplace_inverse_cdf(rng.uniform(dim), b) + 0.0


def apply_poisson_noise(rng: Rng, y_clean) -> np.ndarray:
    """Shot noise on the 8-bit scale.

    Values in [-1, 1] are mapped to means in [0, 255], a Poisson count is
    drawn per entry and the counts are mapped back.
    """
    y = np.asarray(y_clean, dtype=np.float64)
    if np.any(np.abs(y) > 1.0) or not np.all(np.isfinite(y)):
        raise ValueError("Poisson noise expects entries in [-1, 1]")
    counts = rng.poisson((y + 1.0) * 127.5)
    return counts / 127.5 - 1.0
