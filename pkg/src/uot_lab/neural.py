"""Fully-connected networks with hand-written reverse mode and Adam.

Weights are stored as ``(out, in)`` matrices so a layer computes ``W x + b``.
All routines accept a single vector or a batch of row vectors.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core_math import Rng, as_batch

__all__ = ["Mlp", "Adam", "ForwardCache", "ACTIVATIONS", "save_checkpoint", "load_checkpoint", "default_hidden"]

ACTIVATIONS = ("relu", "tanh", "silu")
FINAL_ACTIVATIONS = ("none", "tanh")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "silu":
        return z / (1.0 + np.exp(-z))
    if name == "none":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, z, a):
    # derivative of the activation at pre-activation z (a = act(z))
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "tanh":
        return 1.0 - a * a
    if name == "silu":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 + z * (1.0 - s))
    if name == "none":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


class ForwardCache:
    __slots__ = ("inputs", "pre", "post", "single")

    def __init__(self, inputs, pre, post, single):
        self.inputs = inputs
        self.pre = pre
        self.post = post
        self.single = single


class Mlp:
    """Affine layers with a shared hidden activation and an optional final tanh.

    Parameters
    ----------
    layer_dims : sequence of int
        ``[in, hidden..., out]``.
    activation : {'relu', 'tanh', 'silu'}
    final_activation : {'none', 'tanh'}
    rng : Rng, optional
        Used for Kaiming-uniform initialisation. Without it all parameters are zero.
    """

    def __init__(self, layer_dims, activation="silu", final_activation="none", rng=None):
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims must hold at least two positive ints, got {layer_dims}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
        if final_activation not in FINAL_ACTIVATIONS:
            raise ValueError(f"final_activation must be one of {FINAL_ACTIVATIONS}, got {final_activation!r}")
        self.layer_dims = dims
        self.activation = activation
        self.final_activation = final_activation
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            if rng is None:
                w = np.zeros((fan_out, fan_in))
            else:
                bound = np.sqrt(6.0 / fan_in)
                w = (2.0 * rng.uniform((fan_out, fan_in)) - 1.0) * bound
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))
        self._cache = None

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def params(self):
        """Parameters in canonical order ``[W0, b0, W1, b1, ...]`` (live views)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def n_params(self):
        return sum(p.size for p in self.params())

    def zeros_like_params(self):
        return [np.zeros_like(p) for p in self.params()]

    def copy(self):
        new = Mlp.__new__(Mlp)
        new.layer_dims = list(self.layer_dims)
        new.activation = self.activation
        new.final_activation = self.final_activation
        new.weights = [w.copy() for w in self.weights]
        new.biases = [b.copy() for b in self.biases]
        new._cache = None
        return new

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params():
            raise ValueError(f"expected {self.n_params()} parameters, got {flat.size}")
        pos = 0
        for p in self.params():
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    # -- evaluation ------------------------------------------------------

    def forward_cached(self, x):
        h, single = as_batch(x, self.in_dim, name="input")
        inputs, pre, post = [], [], []
        n_layers = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w.T + b
            name = self.activation if i < n_layers - 1 else self.final_activation
            a = _act(name, z)
            pre.append(z)
            post.append(a)
            h = a
        out = h[0] if single else h
        return out, ForwardCache(inputs, pre, post, single)

    def forward(self, x):
        out, self._cache = self.forward_cached(x)
        return out

    __call__ = forward

    def predict(self, x):
        """Forward pass without touching the stored cache."""
        return self.forward_cached(x)[0]

    def backward(self, upstream, cache=None):
        """Gradients of ``<upstream, forward(x)>`` w.r.t. parameters and input.

        Uses the cache of the last :meth:`forward` call unless one is given.
        Parameter gradients are summed over the batch.
        """
        if cache is None:
            cache = self._cache
        if cache is None:
            raise RuntimeError("backward called before forward; no cached activations")
        g, _ = as_batch(upstream, self.out_dim, name="upstream")
        if g.shape[0] != cache.inputs[0].shape[0]:
            raise ValueError("upstream batch size does not match the cached forward pass")
        n_layers = len(self.weights)
        grads = [None] * (2 * n_layers)
        for i in range(n_layers - 1, -1, -1):
            name = self.activation if i < n_layers - 1 else self.final_activation
            if name != "none":
                g = g * _act_grad(name, cache.pre[i], cache.post[i])
            grads[2 * i] = g.T @ cache.inputs[i]
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i]
        input_grad = g[0] if cache.single else g
        return grads, input_grad

    def input_grad(self, x, upstream=None):
        """Gradient of ``<upstream, net(x)>`` w.r.t. ``x`` (upstream defaults to ones)."""
        out, cache = self.forward_cached(x)
        if upstream is None:
            upstream = np.ones_like(out)
        return self.backward(upstream, cache)[1]


class Adam:
    """Bias-corrected Adam acting in place on an :class:`Mlp`."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise ValueError("lr must be >= 0")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if eps <= 0:
            raise ValueError("eps must be > 0")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, net: Mlp, grads):
        params = net.params()
        if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
            raise ValueError("gradient shapes do not match the network parameters")
        for k, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                bad = int(np.sum(~np.isfinite(g)))
                raise FloatingPointError(f"non-finite gradient in parameter block {k} ({bad} entries) at Adam step {self.t + 1}")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.lr != 0.0:
                p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def copy(self):
        new = Adam(self.lr, self.beta1, self.beta2, self.eps)
        new.t = self.t
        if self.m is not None:
            new.m = [a.copy() for a in self.m]
            new.v = [a.copy() for a in self.v]
        return new


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line, then little-endian float64 parameters

_MAGIC = "uot-lab-mlp"


def save_checkpoint(net: Mlp, path):
    header = {
        "format": _MAGIC,
        "version": 1,
        "layer_dims": net.layer_dims,
        "activation": net.activation,
        "final_activation": net.final_activation,
        "n_params": net.n_params(),
    }
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(net.get_flat().astype("<f8").tobytes())
    return path


def load_checkpoint(path) -> Mlp:
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != _MAGIC:
            raise ValueError(f"{path}: not a {_MAGIC} checkpoint")
        flat = np.frombuffer(fh.read(), dtype="<f8")
    net = Mlp(header["layer_dims"], header["activation"], header["final_activation"])
    if flat.size != header["n_params"]:
        raise ValueError(f"{path}: header promises {header['n_params']} values, file holds {flat.size}")
    net.set_flat(flat.astype(np.float64))
    return net


def default_hidden(dim: int):
    """Three hidden layers: width 128 for low-dimensional points, 256 for signals."""
    width = 128 if dim <= 8 else 256
    return (width, width, width)
