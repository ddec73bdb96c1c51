"""Unbalanced optimal transport maps for unpaired inverse problems, at desk scale."""

__version__ = "0.1.0"

from .core_math import Rng
from .costs import IDENTITY, KL, CostSpec, DivergenceConj, cost, cost_matrix
from .datagen import DegradationSpec, NoiseSpec, PriorSpec, build_imbalanced_pair, degrade, sample_prior
from .errors import ConfigError, CostDomainError, DivergenceError, TrainingDiverged
from .estimator import BalancedOTMap, UnbalancedOTMap
from .metrics import data_fidelity, psnr, sliced_wasserstein
from .neural import Adam, Mlp
from .operators import build_operator
from .trainer import TrainConfig, TrainState, train

__all__ = [
    "__version__",
    "Rng",
    "CostSpec",
    "DivergenceConj",
    "KL",
    "IDENTITY",
    "cost",
    "cost_matrix",
    "PriorSpec",
    "NoiseSpec",
    "DegradationSpec",
    "sample_prior",
    "degrade",
    "build_imbalanced_pair",
    "ConfigError",
    "CostDomainError",
    "DivergenceError",
    "TrainingDiverged",
    "UnbalancedOTMap",
    "BalancedOTMap",
    "psnr",
    "sliced_wasserstein",
    "data_fidelity",
    "Mlp",
    "Adam",
    "build_operator",
    "TrainConfig",
    "TrainState",
    "train",
]
