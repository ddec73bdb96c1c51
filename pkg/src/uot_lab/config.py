"""Strict JSON experiment configuration.

Unknown keys are rejected and every validation error is reported as a
:class:`ConfigError` naming the dotted field path (``cost.tau`` and so on).
"""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .costs import CostSpec, DivergenceConj
from .datagen import Component, DegradationSpec, NoiseSpec, PriorSpec
from .errors import ConfigError
from .operators import OPERATOR_KINDS, Interp, build_operator
from .trainer import TrainConfig

__all__ = [
    "ExperimentConfig",
    "OracleConfig",
    "TwistConfig",
    "load_config",
    "load_oracle_config",
    "load_twist_config",
    "config_hash",
    "recipe_path",
    "METRIC_NAMES",
]

METRIC_NAMES = ("psnr", "psnr_per_level", "sliced_wasserstein", "data_fidelity", "displacement", "mode_proportions")
TERMS = ("both", "likelihood", "quadratic")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ComponentBlock(_Strict):
    mean: list[float]
    sigma: float = Field(ge=0)
    weight: float = Field(ge=0)


class PriorBlock(_Strict):
    kind: Literal["gaussian_mixture_2d", "smooth_signals_1d", "two_modes"]
    components: list[ComponentBlock] = []
    signal_len: int = 64
    n_modes: int = 8
    amplitude: float = 0.5

    def build(self) -> PriorSpec:
        comps = tuple(Component(tuple(c.mean), c.sigma, c.weight) for c in self.components)
        return PriorSpec(self.kind, comps, self.signal_len, self.n_modes, self.amplitude)


class OperatorBlock(_Strict):
    kind: str
    params: dict = {}

    @model_validator(mode="after")
    def _known(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; expected one of {OPERATOR_KINDS}")
        return self

    def build(self):
        return build_operator(self.kind, **self.params)


class NoiseBlock(_Strict):
    kind: Literal["gaussian", "laplace", "poisson", "multilevel"] = "gaussian"
    sigma: float = Field(0.05, ge=0)
    b: float = Field(0.05 / 2**0.5, ge=0)
    levels: list[tuple[float, float]] = [(0.025, 4.0), (0.05, 3.0), (0.1, 2.0), (0.2, 1.0)]

    def build(self) -> NoiseSpec:
        return NoiseSpec(self.kind, self.sigma, self.b, tuple(self.levels))


class DegradationBlock(_Strict):
    op: OperatorBlock
    noise: NoiseBlock = NoiseBlock()


class InterpBlock(_Strict):
    factor: int = Field(4, ge=1)
    mode: Literal["cubic", "linear"] = "cubic"


class CostBlock(_Strict):
    tau: float = Field(gt=0)
    use_likelihood: bool = True
    use_quadratic: bool = True
    likelihood: Literal["gaussian", "laplace", "poisson"] = "gaussian"
    quad_weight: float = Field(1.0, ge=0)
    interp: Optional[InterpBlock] = None


class TrainBlock(_Strict):
    lr_potential: float = Field(5e-5, gt=0)
    lr_map: float = Field(1e-4, gt=0)
    batch_size: int = Field(32, ge=1)
    iterations: int = Field(1000, ge=0)
    map_updates_per_potential: int = Field(1, ge=1)
    eval_every: int = Field(0, ge=0)
    hidden: Optional[list[int]] = None
    activation: Literal["relu", "tanh", "silu"] = "silu"
    map_final_activation: Literal["none", "tanh"] = "none"
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)


class DataBlock(_Strict):
    n_source: int = Field(2000, ge=1)
    n_target: int = Field(2000, ge=1)
    n_eval: int = Field(1000, ge=1)
    imbalance_k: Optional[int] = Field(None, ge=1)


class SweepBlock(_Strict):
    tau: list[float] = []
    terms: list[Literal["both", "likelihood", "quadratic"]] = []

    @model_validator(mode="after")
    def _positive(self):
        if any(t <= 0 for t in self.tau):
            raise ValueError("sweep tau values must be > 0")
        return self


class ExperimentConfig(_Strict):
    name: str = "experiment"
    seed: int = Field(0, ge=0)
    variant: Literal["UOT", "OT"] = "UOT"
    prior: PriorBlock
    degradation: DegradationBlock
    cost: CostBlock
    train: TrainBlock = TrainBlock()
    data: DataBlock = DataBlock()
    eval: list[str] = ["psnr", "sliced_wasserstein", "data_fidelity"]
    output_dir: str = "runs/experiment"
    sweep: Optional[SweepBlock] = None

    @model_validator(mode="after")
    def _check(self):
        bad = [m for m in self.eval if m not in METRIC_NAMES]
        if bad:
            raise ValueError(f"unknown metric(s) {bad}; expected names from {METRIC_NAMES}")
        if self.data.imbalance_k is not None and self.prior.kind != "two_modes":
            raise ValueError("data.imbalance_k needs a two_modes prior")
        return self

    # builders ---------------------------------------------------------------

    @property
    def conj(self) -> DivergenceConj:
        # the balanced variant is the identity conjugate, whatever else is set
        return DivergenceConj("identity" if self.variant == "OT" else "kl")

    def prior_spec(self) -> PriorSpec:
        return self.prior.build()

    def degradation_spec(self) -> DegradationSpec:
        return DegradationSpec(self.degradation.op.build(), self.degradation.noise.build())

    def cost_spec(self, op=None) -> CostSpec:
        c = self.cost
        op = op if op is not None else self.degradation.op.build()
        interp = Interp(c.interp.factor, c.interp.mode) if c.interp is not None else None
        return CostSpec(op, c.tau, c.use_likelihood, c.use_quadratic, c.likelihood, c.quad_weight, interp)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            lr_potential=t.lr_potential,
            lr_map=t.lr_map,
            batch_size=t.batch_size,
            iterations=t.iterations,
            conj=self.conj,
            seed=self.seed,
            map_updates_per_potential=t.map_updates_per_potential,
            eval_every=t.eval_every,
            hidden=None if t.hidden is None else tuple(t.hidden),
            activation=t.activation,
            map_final_activation=t.map_final_activation,
            beta1=t.beta1,
            beta2=t.beta2,
        )

    def with_changes(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``{"cost.tau": 0.5}``; revalidated."""
        data = self.model_dump(mode="json")
        for path, value in changes.items():
            node = data
            keys = path.split(".")
            for k in keys[:-1]:
                node = node[k]
            node[keys[-1]] = value
        return parse_config(data, ExperimentConfig)


class OracleConfig(_Strict):
    seed: int = Field(0, ge=0)
    n_instances: int = Field(20, ge=1)
    n_points: int = Field(16, ge=1)
    dim: int = Field(2, ge=1)
    eps: float = Field(0.01, gt=0)
    rho: float = Field(1.0, gt=0)
    brute_force_max_n: int = Field(7, ge=1, le=9)
    output_dir: str = "runs/oracle"


class TwistConfig(_Strict):
    op: OperatorBlock
    lams: list[float] = [0.0, 2.0]
    grid_lo: float = -2.0
    grid_hi: float = 2.0
    grid_n: int = Field(41, ge=2)
    seed: int = Field(0, ge=0)
    output_dir: str = "runs/twist"

    @model_validator(mode="after")
    def _two_d(self):
        if self.op.build().in_dim != 2:
            raise ValueError("twist grid search runs on two-dimensional operators")
        return self


def parse_config(data: dict, model=ExperimentConfig):
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        field = ".".join(str(p) for p in err["loc"])
        msg = err["msg"]
        if err["type"] == "missing":
            msg = "required field is missing"
        elif err["type"] == "extra_forbidden":
            msg = "unknown key"
        raise ConfigError(field, msg) from None
    except ValueError as exc:
        # builders of nested specs raise plain ValueError
        raise ConfigError("", str(exc)) from None


def recipe_path(name: str) -> Path:
    """Path of a recipe shipped with the package (``recipe:NAME`` on the command line)."""
    path = Path(str(resources.files("uot_lab") / "recipes" / f"{name}.json"))
    if not path.exists():
        available = sorted(p.stem for p in path.parent.glob("*.json"))
        raise ConfigError("", f"unknown recipe {name!r}; available: {available}")
    return path


def _read(path) -> dict:
    if isinstance(path, str) and path.startswith("recipe:"):
        path = recipe_path(path[len("recipe:"):])
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("", "config must be a JSON object")
    # a run manifest embeds the config it was produced from
    if "config" in data and "config_hash" in data:
        data = data["config"]
    return data


def load_config(path, seed: int | None = None, output_dir: str | None = None) -> ExperimentConfig:
    data = _read(path)
    if seed is not None:
        data["seed"] = seed
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    cfg = parse_config(data, ExperimentConfig)
    try:
        cfg.prior_spec()
        cfg.degradation_spec()
        cfg.cost_spec()
    except ValueError as exc:
        raise ConfigError("", str(exc)) from None
    return cfg


def load_oracle_config(path, seed=None, output_dir=None) -> OracleConfig:
    data = _read(path)
    if seed is not None:
        data["seed"] = seed
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    return parse_config(data, OracleConfig)


def load_twist_config(path, seed=None, output_dir=None) -> TwistConfig:
    data = _read(path)
    if seed is not None:
        data["seed"] = seed
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    return parse_config(data, TwistConfig)


def config_hash(cfg: BaseModel) -> str:
    """SHA-256 of the canonical JSON dump, ignoring ``output_dir``."""
    data = cfg.model_dump(mode="json")
    data.pop("output_dir", None)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
