"""Alternating semi-dual training of a transport map and a potential.

Each iteration samples an unpaired measurement batch ``Y`` and signal batch
``X``, takes a descent step on the map loss

    L_T = mean_y [ c(y, T(y)) - v(T(y)) ]

and then a descent step on the potential loss

    L_v = mean_y conj(-c(y, T(y)) + v(T(y))) + mean_x conj(-v(x)).

With ``conj = KL`` (``exp(t) - 1``) this learns the unbalanced map; with the
identity conjugate it reduces to the balanced semi-dual objective.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .core_math import Rng, as_batch
from .costs import KL, CostSpec, DivergenceConj, cost, cost_grad_x
from .errors import CostDomainError, DivergenceError, TrainingDiverged
from .neural import Adam, Mlp, default_hidden

__all__ = [
    "TrainConfig",
    "TrainState",
    "LossRecord",
    "map_loss",
    "map_loss_and_grad",
    "potential_loss",
    "potential_loss_and_grad",
    "init_state",
    "train",
]

log = logging.getLogger(__name__)

Sampler = Callable[[Rng, int], np.ndarray]

# substream indices under the run seed
STREAM_MU, STREAM_NU, STREAM_MAP_INIT, STREAM_POT_INIT = 1, 2, 3, 4


@dataclass(frozen=True)
class TrainConfig:
    lr_potential: float = 5e-5
    lr_map: float = 1e-4
    batch_size: int = 32
    iterations: int = 1000
    conj: DivergenceConj = KL
    seed: int = 0
    map_updates_per_potential: int = 1
    eval_every: int = 0
    hidden: tuple | None = None
    activation: str = "silu"
    map_final_activation: str = "none"
    beta1: float = 0.5
    beta2: float = 0.999

    def __post_init__(self):
        if self.lr_potential <= 0 or self.lr_map <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.map_updates_per_potential < 1:
            raise ValueError("map_updates_per_potential must be >= 1")
        if self.eval_every < 0:
            raise ValueError("eval_every must be >= 0")


class LossRecord(NamedTuple):
    step: int
    loss_map: float
    loss_potential: float
    mean_cost: float
    mean_data_fidelity: float


@dataclass
class TrainState:
    map_net: Mlp
    map_opt: Adam
    potential_net: Mlp
    potential_opt: Adam
    step: int = 0
    loss_history: list = field(default_factory=list)

    def copy(self):
        return TrainState(
            self.map_net.copy(),
            self.map_opt.copy(),
            self.potential_net.copy(),
            self.potential_opt.copy(),
            self.step,
            list(self.loss_history),
        )


def init_state(config: TrainConfig, y_dim: int, x_dim: int) -> TrainState:
    root = Rng(config.seed)
    hidden = tuple(config.hidden) if config.hidden is not None else default_hidden(max(y_dim, x_dim))
    map_net = Mlp((y_dim, *hidden, x_dim), config.activation, config.map_final_activation, rng=root.stream(STREAM_MAP_INIT))
    pot_net = Mlp((x_dim, *hidden, 1), config.activation, "none", rng=root.stream(STREAM_POT_INIT))
    return TrainState(
        map_net,
        Adam(config.lr_map, config.beta1, config.beta2),
        pot_net,
        Adam(config.lr_potential, config.beta1, config.beta2),
    )


# ---------------------------------------------------------------------------
# losses and their gradients


def map_loss_and_grad(map_net: Mlp, potential_net: Mlp, spec: CostSpec, batch_y):
    """Map loss, its gradient w.r.t. the map parameters, and batch diagnostics."""
    y, _ = as_batch(batch_y, spec.y_dim, name="batch_y")
    n = y.shape[0]
    t, t_cache = map_net.forward_cached(y)
    c = cost(spec, y, t)
    v_t, v_cache = potential_net.forward_cached(t)
    loss = float(np.mean(c - v_t[:, 0]))
    _, grad_v = potential_net.backward(np.ones((n, 1)), v_cache)
    upstream = (cost_grad_x(spec, y, t) - grad_v) / n
    grads, _ = map_net.backward(upstream, t_cache)
    return loss, grads, {"mapped": t, "cost": c, "v_mapped": v_t[:, 0]}


def potential_loss_and_grad(map_net: Mlp, potential_net: Mlp, spec: CostSpec, conj: DivergenceConj, batch_y, batch_x):
    """Potential loss and its gradient w.r.t. the potential parameters (map held fixed)."""
    y, _ = as_batch(batch_y, spec.y_dim, name="batch_y")
    x, _ = as_batch(batch_x, spec.x_dim, name="batch_x")
    if y.shape[0] == 0 or x.shape[0] == 0:
        raise ValueError("batches must be nonempty")
    t = map_net.predict(y)
    c = cost(spec, y, t)
    v_t, cache_t = potential_net.forward_cached(t)
    v_x, cache_x = potential_net.forward_cached(x)
    a = -c + v_t[:, 0]
    b = -v_x[:, 0]
    loss = float(np.mean(conj(a)) + np.mean(conj(b)))
    g_t, _ = potential_net.backward((conj.deriv(a) / y.shape[0])[:, None], cache_t)
    g_x, _ = potential_net.backward((-conj.deriv(b) / x.shape[0])[:, None], cache_x)
    grads = [p + q for p, q in zip(g_t, g_x)]
    return loss, grads


def map_loss(state: TrainState, batch_y, spec: CostSpec) -> float:
    loss = map_loss_and_grad(state.map_net, state.potential_net, spec, batch_y)[0]
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite map loss at step {state.step}")
    return loss


def potential_loss(state: TrainState, batch_y, batch_x, spec: CostSpec, conj: DivergenceConj = KL) -> float:
    loss = potential_loss_and_grad(state.map_net, state.potential_net, spec, conj, batch_y, batch_x)[0]
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite potential loss at step {state.step}")
    return loss


# ---------------------------------------------------------------------------
# training loop


def _draw(sampler: Sampler, rng: Rng, n: int, dim: int, name: str) -> np.ndarray:
    batch = np.asarray(sampler(rng, n), dtype=np.float64)
    if batch.shape != (n, dim):
        raise ValueError(f"{name} sampler returned shape {batch.shape}, expected {(n, dim)}")
    return batch


def train(
    config: TrainConfig,
    mu_sampler: Sampler,
    nu_sampler: Sampler,
    spec: CostSpec,
    state: TrainState | None = None,
    callback: Callable[[TrainState], None] | None = None,
) -> TrainState:
    """Run the alternating updates for ``config.iterations`` steps.

    ``mu_sampler`` draws measurements and ``nu_sampler`` draws clean signals;
    each gets its own RNG substream so no pairing can leak between them.
    ``callback`` runs every ``eval_every`` steps (and after the last one).
    On a non-finite loss or conjugate overflow, :class:`TrainingDiverged` is
    raised carrying the last good snapshot.
    """
    if state is None:
        state = init_state(config, spec.y_dim, spec.x_dim)
    if config.iterations == 0:
        return state
    root = Rng(config.seed)
    mu_rng, nu_rng = root.stream(STREAM_MU), root.stream(STREAM_NU)
    last_good = state.copy()
    bs = config.batch_size
    for _ in range(config.iterations):
        step = state.step + 1
        try:
            for _ in range(config.map_updates_per_potential):
                y = _draw(mu_sampler, mu_rng, bs, spec.y_dim, "mu")
                l_map, g_map, info = map_loss_and_grad(state.map_net, state.potential_net, spec, y)
                if not np.isfinite(l_map):
                    raise DivergenceError("non-finite map loss")
                state.map_opt.step(state.map_net, g_map)
            x = _draw(nu_sampler, nu_rng, bs, spec.x_dim, "nu")
            l_pot, g_pot = potential_loss_and_grad(state.map_net, state.potential_net, spec, config.conj, y, x)
            if not np.isfinite(l_pot):
                raise DivergenceError("non-finite potential loss")
            state.potential_opt.step(state.potential_net, g_pot)
        except (DivergenceError, CostDomainError, FloatingPointError) as exc:
            log.warning("aborting at step %d: %s", step, exc)
            raise TrainingDiverged(step, str(exc), last_good) from exc
        residual = spec.op.apply(info["mapped"]) - y
        state.step = step
        state.loss_history.append(
            LossRecord(step, l_map, l_pot, float(np.mean(info["cost"])), float(np.mean(np.sum(residual**2, axis=1))))
        )
        at_eval = config.eval_every and step % config.eval_every == 0
        if at_eval:
            last_good = state.copy()
            if callback is not None:
                callback(state)
    if callback is not None and not (config.eval_every and state.step % config.eval_every == 0):
        callback(state)
    return state


def with_overrides(config: TrainConfig, **changes) -> TrainConfig:
    return replace(config, **changes)
