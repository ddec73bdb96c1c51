"""scikit-learn style wrapper around the semi-dual trainer."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core_math import Rng
from .costs import CostSpec, DivergenceConj
from .metrics import data_fidelity
from .operators import CorruptionOp, Identity, Interp
from .trainer import TrainConfig, init_state, train

__all__ = ["UnbalancedOTMap", "BalancedOTMap", "row_sampler"]


def row_sampler(data):
    """Sampler drawing rows of ``data`` uniformly with replacement."""
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]

    def draw(rng: Rng, size: int):
        return data[rng.integers(n, size)]

    return draw


class UnbalancedOTMap(TransformerMixin, BaseEstimator):
    """Learn a transport map from measurements to clean signals without pairs.

    ``fit(Y, X)`` takes measurements ``Y`` of shape ``(n, m)`` and an
    independent set of clean signals ``X`` of shape ``(N, d)``; the two sets
    are never paired. ``transform(Y)`` returns the reconstructions ``T(Y)``.

    Parameters
    ----------
    operator : CorruptionOp, optional
        Known forward operator. Defaults to the identity on ``X``'s dimension.
    likelihood : {'gaussian', 'laplace', 'poisson'}
    use_likelihood, use_quadratic : bool
        Which cost terms are active.
    tau : float
        Cost intensity multiplying the whole cost.
    quad_weight : float
        Weight of the quadratic term relative to the likelihood term.
    interp : Interp, optional
        Upsampler for the quadratic term when measurement and signal
        dimensions differ.
    divergence : {'kl', 'identity'}
        Marginal penalty conjugate; ``'identity'`` gives the balanced variant.
    n_iter : int
        Number of outer iterations.
    random_state : int
        Seed for initialisation and minibatch streams.
    """

    def __init__(
        self,
        operator: CorruptionOp | None = None,
        likelihood="gaussian",
        use_likelihood=True,
        use_quadratic=True,
        tau=1e-3,
        quad_weight=1.0,
        interp: Interp | None = None,
        divergence="kl",
        hidden=None,
        activation="silu",
        map_final_activation="none",
        lr_map=1e-4,
        lr_potential=5e-5,
        batch_size=32,
        n_iter=1000,
        map_updates_per_potential=1,
        beta1=0.5,
        beta2=0.999,
        eval_every=0,
        random_state=0,
    ):
        self.operator = operator
        self.likelihood = likelihood
        self.use_likelihood = use_likelihood
        self.use_quadratic = use_quadratic
        self.tau = tau
        self.quad_weight = quad_weight
        self.interp = interp
        self.divergence = divergence
        self.hidden = hidden
        self.activation = activation
        self.map_final_activation = map_final_activation
        self.lr_map = lr_map
        self.lr_potential = lr_potential
        self.batch_size = batch_size
        self.n_iter = n_iter
        self.map_updates_per_potential = map_updates_per_potential
        self.beta1 = beta1
        self.beta2 = beta2
        self.eval_every = eval_every
        self.random_state = random_state

    def _cost_spec(self, x_dim):
        op = self.operator if self.operator is not None else Identity(x_dim)
        if op.in_dim != x_dim:
            raise ValueError(f"operator expects signals of dimension {op.in_dim}, X has {x_dim} features")
        return CostSpec(
            op,
            tau=self.tau,
            use_likelihood=self.use_likelihood,
            use_quadratic=self.use_quadratic,
            likelihood=self.likelihood,
            quad_weight=self.quad_weight,
            interp=self.interp,
        )

    def _train_config(self):
        return TrainConfig(
            lr_potential=self.lr_potential,
            lr_map=self.lr_map,
            batch_size=self.batch_size,
            iterations=self.n_iter,
            conj=DivergenceConj(self.divergence),
            seed=int(self.random_state or 0),
            map_updates_per_potential=self.map_updates_per_potential,
            eval_every=self.eval_every,
            hidden=None if self.hidden is None else tuple(self.hidden),
            activation=self.activation,
            map_final_activation=self.map_final_activation,
            beta1=self.beta1,
            beta2=self.beta2,
        )

    def fit(self, Y, X, callback=None):
        """Fit on unpaired measurements ``Y`` and clean signals ``X``.

        ``callback(estimator)`` runs every ``eval_every`` iterations with the
        fitted attributes pointing at the live training state.
        """
        Y = check_array(Y, dtype=np.float64)
        X = check_array(X, dtype=np.float64)
        spec = self._cost_spec(X.shape[1])
        if Y.shape[1] != spec.y_dim:
            raise ValueError(f"operator produces measurements of dimension {spec.y_dim}, Y has {Y.shape[1]} features")
        config = self._train_config()
        self.cost_spec_ = spec
        self.n_features_in_ = Y.shape[1]
        self.n_features_out_ = X.shape[1]
        state = init_state(config, spec.y_dim, spec.x_dim)
        self._bind(state)

        hook = None
        if callback is not None:
            def hook(s):
                self._bind(s)
                callback(self)

        state = train(config, row_sampler(Y), row_sampler(X), spec, state=state, callback=hook)
        self._bind(state)
        return self

    def _bind(self, state):
        self.train_state_ = state
        self.map_net_ = state.map_net
        self.potential_net_ = state.potential_net
        self.loss_history_ = state.loss_history
        self.n_iter_ = state.step

    def transform(self, Y):
        check_is_fitted(self, "map_net_")
        Y = check_array(Y, dtype=np.float64)
        if Y.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {Y.shape[1]}")
        return self.map_net_.predict(Y)

    predict = transform

    def potential(self, X):
        check_is_fitted(self, "potential_net_")
        X = check_array(X, dtype=np.float64)
        return self.potential_net_.predict(X)[:, 0]

    def data_fidelity(self, Y):
        check_is_fitted(self, "map_net_")
        return data_fidelity(self.cost_spec_.op, self.map_net_, check_array(Y, dtype=np.float64))

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "map_net_")
        return np.array([f"x{i}" for i in range(self.n_features_out_)], dtype=object)


class BalancedOTMap(UnbalancedOTMap):
    """Same model with the identity conjugate, i.e. exact marginal matching."""

    def __init__(self, operator=None, likelihood="gaussian", use_likelihood=True, use_quadratic=True, tau=1e-3,
                 quad_weight=1.0, interp=None, divergence="identity", hidden=None, activation="silu",
                 map_final_activation="none", lr_map=1e-4, lr_potential=5e-5, batch_size=32, n_iter=1000,
                 map_updates_per_potential=1, beta1=0.5, beta2=0.999, eval_every=0, random_state=0):
        super().__init__(operator, likelihood, use_likelihood, use_quadratic, tau, quad_weight, interp, divergence,
                         hidden, activation, map_final_activation, lr_map, lr_potential, batch_size, n_iter,
                         map_updates_per_potential, beta1, beta2, eval_every, random_state)
