"""Synthetic clean-signal priors and measurement pipelines ``y = A(x) + n``."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core_math import Rng, apply_poisson_noise, as_batch, sample_gaussian, sample_laplace
from .operators import CorruptionOp

__all__ = [
    "Component",
    "PriorSpec",
    "NoiseSpec",
    "DegradationSpec",
    "ImbalancedPair",
    "sample_prior",
    "degrade",
    "build_imbalanced_pair",
    "nearest_mode",
    "mode_proportions",
    "two_modes",
    "multilevel",
    "save_dataset",
    "load_dataset",
    "DEFAULT_MULTILEVEL",
]

PRIOR_KINDS = ("gaussian_mixture_2d", "smooth_signals_1d", "two_modes")
NOISE_KINDS = ("gaussian", "laplace", "poisson", "multilevel")

# four noise levels drawn in proportions 4:3:2:1
DEFAULT_MULTILEVEL = ((0.025, 4.0), (0.05, 3.0), (0.1, 2.0), (0.2, 1.0))


@dataclass(frozen=True)
class Component:
    mean: tuple
    sigma: float
    weight: float


@dataclass(frozen=True)
class PriorSpec:
    """Clean-signal distribution.

    Mixture kinds draw ``mean + sigma * N(0, I)`` from a component picked by
    weight. ``smooth_signals_1d`` draws random low-frequency Fourier series of
    length ``signal_len`` clipped to [-1, 1].
    """

    kind: str = "gaussian_mixture_2d"
    components: tuple = ()
    signal_len: int = 64
    n_modes: int = 8
    amplitude: float = 0.5

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"prior kind must be one of {PRIOR_KINDS}, got {self.kind!r}")
        comps = tuple(c if isinstance(c, Component) else Component(*c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if self.kind == "smooth_signals_1d":
            if self.signal_len < 2 or not 1 <= self.n_modes <= self.signal_len // 2:
                raise ValueError("smooth signals need signal_len >= 2 and 1 <= n_modes <= signal_len / 2")
            return
        if not comps:
            raise ValueError("mixture priors need at least one component")
        if self.kind == "two_modes" and len(comps) != 2:
            raise ValueError("two_modes prior needs exactly two components")
        weights = np.array([c.weight for c in comps])
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("component weights must be nonnegative and sum to 1")
        if any(c.sigma < 0 for c in comps):
            raise ValueError("component sigmas must be nonnegative")
        dims = {len(c.mean) for c in comps}
        if len(dims) != 1:
            raise ValueError("component means must share a dimension")

    @property
    def dim(self):
        if self.kind == "smooth_signals_1d":
            return self.signal_len
        return len(self.components[0].mean)

    @property
    def means(self):
        return np.array([c.mean for c in self.components], dtype=np.float64)


def two_modes(separation=3.0, sigma=0.5, weights=(0.5, 0.5)) -> PriorSpec:
    """Two isotropic 2-D Gaussians on the first axis, ``separation`` apart."""
    h = separation / 2.0
    return PriorSpec(
        "two_modes",
        (Component((-h, 0.0), sigma, weights[0]), Component((h, 0.0), sigma, weights[1])),
    )


def _sample_mixture(spec, rng, n):
    weights = np.array([c.weight for c in spec.components])
    cdf = np.cumsum(weights)
    labels = np.searchsorted(cdf, rng.uniform(n) * cdf[-1], side="right")
    labels = np.minimum(labels, len(weights) - 1)
    noise = rng.normal((n, spec.dim))
    sig = np.array([c.sigma for c in spec.components])
    return spec.means[labels] + sig[labels, None] * noise, labels


def _sample_smooth(spec, rng, n):
    length, k = spec.signal_len, spec.n_modes
    t = np.arange(length) / length
    freqs = np.arange(1, k + 1)
    basis_c = np.cos(2.0 * np.pi * freqs[:, None] * t[None, :])
    basis_s = np.sin(2.0 * np.pi * freqs[:, None] * t[None, :])
    scale = spec.amplitude / freqs
    coef = rng.normal((n, 2, k)) * scale
    offset = (2.0 * rng.uniform(n) - 1.0) * 0.3
    x = coef[:, 0] @ basis_c + coef[:, 1] @ basis_s + offset[:, None]
    return np.clip(x, -1.0, 1.0), np.zeros(n, dtype=np.int64)


def sample_prior(spec: PriorSpec, rng: Rng, n: int, return_labels=False):
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.kind == "smooth_signals_1d":
        x, labels = _sample_smooth(spec, rng, n)
    else:
        x, labels = _sample_mixture(spec, rng, n)
    return (x, labels) if return_labels else x


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"
    sigma: float = 0.05
    b: float = 0.05 / np.sqrt(2.0)
    levels: tuple = DEFAULT_MULTILEVEL

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.sigma < 0 or self.b < 0:
            raise ValueError("noise scales must be nonnegative")
        if self.kind == "multilevel":
            levels = tuple((float(s), float(p)) for s, p in self.levels)
            if not levels or any(p <= 0 for _, p in levels) or any(s < 0 for s, _ in levels):
                raise ValueError("multilevel noise needs positive proportions and nonnegative sigmas")
            total = sum(p for _, p in levels)
            object.__setattr__(self, "levels", tuple((s, p / total) for s, p in levels))

    @property
    def sigmas(self):
        return np.array([s for s, _ in self.levels])

    @property
    def proportions(self):
        return np.array([p for _, p in self.levels])


def multilevel(levels=DEFAULT_MULTILEVEL) -> NoiseSpec:
    return NoiseSpec("multilevel", levels=tuple(levels))


@dataclass(frozen=True)
class DegradationSpec:
    op: CorruptionOp
    noise: NoiseSpec = field(default_factory=NoiseSpec)


def degrade(spec: DegradationSpec, x, rng: Rng, return_info=False):
    """Apply the operator, then the noise model.

    Multi-level noise first draws a level per sample by its proportion. Poisson
    noise clamps ``A(x)`` to [-1, 1] beforehand; ``info['clamped']`` counts
    the clamped entries and ``info['levels']`` holds the drawn level indices.
    """
    xb, single = as_batch(x, spec.op.in_dim, name="x")
    clean = spec.op.apply(xb)
    n, m = clean.shape
    noise = spec.noise
    levels = None
    clamped = 0
    if noise.kind == "gaussian":
        y = clean + sample_gaussian(rng, (n, m), noise.sigma)
    elif noise.kind == "laplace":
        y = clean + sample_laplace(rng, (n, m), noise.b)
    elif noise.kind == "poisson":
        clamped = int(np.sum(np.abs(clean) > 1.0))
        y = apply_poisson_noise(rng, np.clip(clean, -1.0, 1.0))
    else:
        cdf = np.cumsum(noise.proportions)
        levels = np.minimum(np.searchsorted(cdf, rng.uniform(n) * cdf[-1], side="right"), len(cdf) - 1)
        y = clean + noise.sigmas[levels, None] * rng.normal((n, m))
    if single:
        y = y[0]
        levels = None if levels is None else levels[0]
    if return_info:
        return y, {"levels": levels, "clamped": clamped}
    return y


class ImbalancedPair(NamedTuple):
    source: np.ndarray
    target: np.ndarray
    source_labels: np.ndarray
    target_labels: np.ndarray


def build_imbalanced_pair(spec: PriorSpec, ratio_k: int, n_target: int, rng: Rng, degradation=None) -> ImbalancedPair:
    """Target set with modes in ratio ``k:1`` and a 1:1 source drawn from it.

    The minority count is ``floor(n_target / (k + 1))``. The source keeps every
    minority sample plus an equal-sized subsample of the majority mode, and is
    degraded when ``degradation`` is given.
    """
    if spec.kind != "two_modes" or len(spec.components) != 2:
        raise ValueError("class imbalance needs a two_modes prior")
    if ratio_k < 1:
        raise ValueError("ratio_k must be >= 1")
    n_minor = n_target // (ratio_k + 1)
    n_major = n_target - n_minor
    comps = spec.components
    major = PriorSpec("gaussian_mixture_2d", (Component(comps[0].mean, comps[0].sigma, 1.0),))
    minor = PriorSpec("gaussian_mixture_2d", (Component(comps[1].mean, comps[1].sigma, 1.0),))
    x_major = sample_prior(major, rng, n_major) if n_major else np.zeros((0, spec.dim))
    x_minor = sample_prior(minor, rng, n_minor) if n_minor else np.zeros((0, spec.dim))
    target = np.vstack([x_major, x_minor])
    target_labels = np.concatenate([np.zeros(n_major, np.int64), np.ones(n_minor, np.int64)])
    keep = rng.uniform(n_major).argsort(kind="stable")[:n_minor]
    source = np.vstack([x_major[np.sort(keep)], x_minor])
    source_labels = np.concatenate([np.zeros(n_minor, np.int64), np.ones(n_minor, np.int64)])
    if degradation is not None:
        source = degrade(degradation, source, rng)
    return ImbalancedPair(source, target, source_labels, target_labels)


def nearest_mode(points, means) -> np.ndarray:
    pts, _ = as_batch(points, name="points")
    d = ((pts[:, None, :] - np.asarray(means)[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d, axis=1)


def mode_proportions(points, means) -> np.ndarray:
    labels = nearest_mode(points, means)
    return np.bincount(labels, minlength=len(means)) / len(labels)


def save_dataset(path, samples):
    path = Path(path)
    np.savetxt(path, np.atleast_2d(samples), delimiter=",", fmt="%.17g")
    return path


def load_dataset(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
