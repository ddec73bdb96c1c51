"""Experiment orchestration: data -> training -> metrics -> CSV/SVG/manifest."""
from __future__ import annotations

import csv
import json
import logging
import os
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import __version__
from .config import ExperimentConfig, OracleConfig, TwistConfig, config_hash
from .core_math import Rng
from .datagen import (
    Component,
    PriorSpec,
    build_imbalanced_pair,
    degrade,
    mode_proportions,
    sample_prior,
)
from .errors import TrainingDiverged
from .metrics import data_fidelity, displacement, psnr, sliced_wasserstein
from .neural import load_checkpoint, save_checkpoint
from .oracle import (
    DiscreteMeasure,
    brute_force_assignment,
    gaussian_ot_map,
    grid_2d,
    solve_ot_exact,
    solve_uot_entropic,
    twist_check,
)
from .svg import curve_svg, overlay_svg, scatter_svg
from .trainer import init_state, train

__all__ = [
    "MetricRecord",
    "RunResult",
    "Dataset",
    "prepare_data",
    "evaluate",
    "run_experiment",
    "evaluate_run",
    "sweep_grid",
    "run_sweep",
    "run_fig1",
    "run_oracle",
    "run_twist",
    "sweep_threads",
    "LOSS_COLUMNS",
    "METRIC_COLUMNS",
]

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("step", "loss_map", "loss_potential", "mean_cost", "mean_data_fidelity")
METRIC_COLUMNS = ("name", "step", "value")
SWEEP_KEY_COLUMNS = ("tau", "terms", "seed", "status", "final_step")
FIG1_COLUMNS = ("variant", "residual", "displacement")
ORACLE_COLUMNS = ("instance", "n_points", "ot_cost", "uot_cost", "relative_gap", "brute_force_match")
TWIST_COLUMNS = ("lam", "lipschitz", "analytic_injective", "verdict")

# substreams of the run seed used for data (training uses 1-4)
S_TARGET, S_SOURCE, S_DEGRADE, S_EVAL_X, S_EVAL_DEGRADE, S_EVAL_TARGET, S_METRIC = range(10, 17)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


class MetricRecord(NamedTuple):
    name: str
    step: int
    value: float


@dataclass
class Dataset:
    source: np.ndarray
    target: np.ndarray
    eval_y: np.ndarray
    eval_x: np.ndarray
    eval_target: np.ndarray
    eval_levels: np.ndarray | None
    target_mode0: float | None = None


@dataclass
class RunResult:
    status: int
    out_dir: Path
    metrics: list = field(default_factory=list)
    state: object = None
    reason: str = ""
    guard: str = ""  # exception class that triggered an abort

    @property
    def metric_dict(self):
        return {m.name: m.value for m in self.metrics}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ---------------------------------------------------------------------------
# data


def _mixture(prior: PriorSpec, weights) -> PriorSpec:
    comps = tuple(Component(c.mean, c.sigma, w) for c, w in zip(prior.components, weights))
    return PriorSpec("gaussian_mixture_2d", comps)


def prepare_data(cfg: ExperimentConfig) -> Dataset:
    """Unpaired training sets plus a held-out evaluation set with clean references."""
    root = Rng(cfg.seed)
    prior = cfg.prior_spec()
    deg = cfg.degradation_spec()
    k = cfg.data.imbalance_k
    target_mode0 = None
    if k is not None:
        pair = build_imbalanced_pair(prior, k, cfg.data.n_target, root.stream(S_TARGET), deg)
        source, target = pair.source, pair.target
        target_law = _mixture(prior, (k / (k + 1.0), 1.0 / (k + 1.0)))
        target_mode0 = k / (k + 1.0)
    else:
        target = sample_prior(prior, root.stream(S_TARGET), cfg.data.n_target)
        clean = sample_prior(prior, root.stream(S_SOURCE), cfg.data.n_source)
        source = degrade(deg, clean, root.stream(S_DEGRADE))
        target_law = prior
        if prior.kind == "two_modes":
            target_mode0 = prior.components[0].weight
    eval_x = sample_prior(prior, root.stream(S_EVAL_X), cfg.data.n_eval)
    eval_y, info = degrade(deg, eval_x, root.stream(S_EVAL_DEGRADE), return_info=True)
    eval_target = sample_prior(target_law, root.stream(S_EVAL_TARGET), cfg.data.n_eval)
    return Dataset(source, target, eval_y, eval_x, eval_target, info["levels"], target_mode0)


# ---------------------------------------------------------------------------
# metrics


def evaluate(cfg: ExperimentConfig, transport, data: Dataset, step: int) -> list:
    spec = cfg.cost_spec()
    mapped = transport(data.eval_y)
    out = []
    for name in cfg.eval:
        if name == "psnr":
            out.append(MetricRecord("psnr", step, psnr(mapped, data.eval_x)))
        elif name == "psnr_per_level":
            if data.eval_levels is None:
                continue
            for lvl in range(int(data.eval_levels.max()) + 1):
                sel = data.eval_levels == lvl
                if sel.any():
                    out.append(MetricRecord(f"psnr_level_{lvl}", step, psnr(mapped[sel], data.eval_x[sel])))
        elif name == "sliced_wasserstein":
            sw = sliced_wasserstein(mapped, data.eval_target, 128, Rng(cfg.seed).stream(S_METRIC))
            out.append(MetricRecord("sliced_wasserstein", step, sw))
        elif name == "data_fidelity":
            out.append(MetricRecord("data_fidelity", step, data_fidelity(spec.op, transport, data.eval_y)))
        elif name == "displacement":
            if spec.y_dim == spec.x_dim:
                out.append(MetricRecord("displacement", step, displacement(transport, data.eval_y)))
        elif name == "mode_proportions":
            prior = cfg.prior_spec()
            if prior.kind != "two_modes":
                continue
            props = mode_proportions(mapped, prior.means)
            out.append(MetricRecord("mode0_proportion", step, float(props[0])))
            if data.target_mode0 is not None:
                out.append(MetricRecord("mode_proportion_error", step, float(abs(props[0] - data.target_mode0))))
    bad = [m for m in out if not np.isfinite(m.value)]
    if bad:
        log.warning("non-finite metrics: %s", [m.name for m in bad])
    return out


# ---------------------------------------------------------------------------
# single run


def _plots(cfg, out_dir: Path, transport, data: Dataset, title):
    mapped = transport(data.eval_y)
    files = []
    if data.eval_x.shape[1] == 2 and data.eval_y.shape[1] == 2:
        files.append(
            scatter_svg(
                out_dir / "scatter.svg",
                {"source y": data.eval_y, "mapped T(y)": mapped, "target x": data.eval_target},
                title=title,
            )
        )
    else:
        signals = {"clean x": data.eval_x, "reconstruction T(y)": mapped}
        if data.eval_y.shape[1] == data.eval_x.shape[1]:
            signals["measurement y"] = data.eval_y
        files.append(overlay_svg(out_dir / "signals.svg", signals, title=title))
    return files


def _write_losses(out_dir: Path, history):
    write_csv(out_dir / "loss.csv", LOSS_COLUMNS, history)
    if history:
        arr = np.array(history, dtype=np.float64)
        curve_svg(out_dir / "loss.svg", arr[:, 0], {"L_T": arr[:, 1], "L_v": arr[:, 2]}, title="training losses")


def _manifest(cfg, out_dir: Path, status, reason, step, files):
    manifest = {
        "config": cfg.model_dump(mode="json"),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "version": version_string(),
        "status": status,
        "reason": reason,
        "final_step": step,
        "files": sorted(Path(f).name for f in files),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _best_snapshot(metrics):
    """Step of the evaluation snapshot with the lowest sliced Wasserstein distance."""
    sw = [(m.value, m.step) for m in metrics if m.name == "sliced_wasserstein" and np.isfinite(m.value)]
    if len(sw) < 2:
        return None
    return min(sw)[1]


def run_experiment(cfg: ExperimentConfig, out_dir=None, title=None) -> RunResult:
    """Train one configuration and write its artifacts into ``out_dir``.

    Writes ``loss.csv``, ``metrics.csv``, ``loss.svg``, a scatter or signal
    overlay SVG, two checkpoints and ``manifest.json``. On divergence the
    losses recorded so far and the last good checkpoint are kept and the
    result status is ``EXIT_DIVERGED``.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = prepare_data(cfg)
    spec = cfg.cost_spec()
    tcfg = cfg.train_config()
    state = init_state(tcfg, spec.y_dim, spec.x_dim)
    metrics = []

    def on_eval(s):
        metrics.extend(evaluate(cfg, s.map_net.predict, data, s.step))

    status, reason, guard = EXIT_OK, "", ""
    x_src, x_tgt = data.source, data.target

    def mu(rng, n):
        return x_src[rng.integers(x_src.shape[0], n)]

    def nu(rng, n):
        return x_tgt[rng.integers(x_tgt.shape[0], n)]

    try:
        train(tcfg, mu, nu, spec, state=state, callback=on_eval if tcfg.eval_every else None)
        final = state
    except TrainingDiverged as exc:
        status, reason = EXIT_DIVERGED, str(exc)
        guard = type(exc.__cause__).__name__ if exc.__cause__ is not None else ""
        final = exc.state
        log.error("%s", exc)
    if not metrics or metrics[-1].step != final.step:
        metrics.extend(evaluate(cfg, final.map_net.predict, data, final.step))
    best = _best_snapshot(metrics)
    if best is not None:
        metrics.append(MetricRecord("best_sliced_wasserstein_step", final.step, float(best)))
    files = []
    _write_losses(out_dir, state.loss_history)
    files += [out_dir / "loss.csv", out_dir / "loss.svg"] if state.loss_history else [out_dir / "loss.csv"]
    files.append(write_csv(out_dir / "metrics.csv", METRIC_COLUMNS, metrics))
    files += _plots(cfg, out_dir, final.map_net.predict, data, title or f"{cfg.name} ({cfg.variant})")
    files.append(save_checkpoint(final.map_net, out_dir / "map.ckpt"))
    files.append(save_checkpoint(final.potential_net, out_dir / "potential.ckpt"))
    _manifest(cfg, out_dir, "diverged" if status else "ok", reason, final.step, files)
    return RunResult(status, out_dir, metrics, final, reason, guard)


def evaluate_run(cfg: ExperimentConfig, out_dir=None) -> list:
    """Recompute metrics from the checkpoint of a finished run."""
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    ckpt = out_dir / "map.ckpt"
    if not ckpt.exists():
        raise FileNotFoundError(f"no checkpoint at {ckpt}; run train first")
    net = load_checkpoint(ckpt)
    step = -1
    manifest = out_dir / "manifest.json"
    if manifest.exists():
        step = json.loads(manifest.read_text()).get("final_step", -1)
    metrics = evaluate(cfg, net.predict, prepare_data(cfg), step)
    write_csv(out_dir / "eval_metrics.csv", METRIC_COLUMNS, metrics)
    return metrics


# ---------------------------------------------------------------------------
# sweeps and ablations


def sweep_threads(n_jobs: int) -> int:
    """Worker count: ``UOT_LAB_THREADS`` when set, else the CPU count, capped by the job count."""
    raw = os.environ.get("UOT_LAB_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ValueError(f"UOT_LAB_THREADS must be an integer, got {raw!r}") from None
        if cap < 1:
            raise ValueError("UOT_LAB_THREADS must be >= 1")
    return max(1, min(cap, n_jobs))


_TERM_FLAGS = {"both": (True, True), "likelihood": (True, False), "quadratic": (False, True)}


def _terms_of(cfg):
    lik, quad = cfg.cost.use_likelihood, cfg.cost.use_quadratic
    return {v: k for k, v in _TERM_FLAGS.items()}[(lik, quad)]


def _with_terms(cfg, terms):
    lik, quad = _TERM_FLAGS[terms]
    changes = {"cost.use_likelihood": lik, "cost.use_quadratic": quad}
    if not quad:
        changes["cost.interp"] = None
    return cfg.with_changes(**changes)


def sweep_grid(cfg: ExperimentConfig) -> list:
    """``(tau, terms, config)`` for every combination in ``cfg.sweep``."""
    sw = cfg.sweep
    taus = list(sw.tau) if sw and sw.tau else [cfg.cost.tau]
    terms = list(sw.terms) if sw and sw.terms else [_terms_of(cfg)]
    grid = []
    for tau in taus:
        for term in terms:
            sub = _with_terms(cfg.with_changes(**{"cost.tau": tau}), term).with_changes(sweep=None)
            grid.append((tau, term, sub))
    return grid


def run_sweep(cfg: ExperimentConfig, out_dir=None) -> tuple:
    """Run the sweep grid (threads capped by ``UOT_LAB_THREADS``) and write ``sweep.csv``.

    Returns ``(status, rows)``; rows follow grid order whatever the scheduling.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = sweep_grid(cfg)

    def job(item):
        tau, term, sub = item
        return run_experiment(sub, out_dir / f"tau={tau!r}_terms={term}")

    with ThreadPoolExecutor(max_workers=sweep_threads(len(grid))) as pool:
        results = list(pool.map(job, grid))
    names = []
    for res in results:
        for m in res.metrics:
            if m.name not in names:
                names.append(m.name)
    rows = []
    for (tau, term, _), res in zip(grid, results):
        final = {}
        for m in res.metrics:
            final[m.name] = m.value
        status = "ok" if res.status == EXIT_OK else "diverged"
        rows.append([tau, term, cfg.seed, status, res.state.step] + [final.get(n, float("nan")) for n in names])
    write_csv(out_dir / "sweep.csv", list(SWEEP_KEY_COLUMNS) + names, rows)
    status = EXIT_OK if all(r.status == EXIT_OK for r in results) else EXIT_DIVERGED
    return status, read_csv(out_dir / "sweep.csv")


def run_fig1(cfg: ExperimentConfig, out_dir=None) -> tuple:
    """Likelihood-only vs quadratic-only maps on the same data and budget.

    Writes ``fig1_likelihood.svg``, ``fig1_quadratic.svg`` and ``fig1.csv``
    (mean residual ``||A(T(y)) - y||^2`` and displacement ``||T(y) - y||^2``).
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, results, status = [], {}, EXIT_OK
    for term in ("likelihood", "quadratic"):
        sub = _with_terms(cfg, term).with_changes(eval=["data_fidelity", "displacement"], sweep=None)
        res = run_experiment(sub, out_dir / term, title=f"{term}-only cost")
        status = max(status, res.status)
        results[term] = res
        data = prepare_data(sub)
        predict = res.state.map_net.predict
        _plots(sub, out_dir, predict, data, f"{term}-only cost")[0].rename(out_dir / f"fig1_{term}.svg")
        d = res.metric_dict
        rows.append([term, d["data_fidelity"], d.get("displacement", float("nan"))])
    write_csv(out_dir / "fig1.csv", FIG1_COLUMNS, rows)
    return status, {r[0]: {"residual": r[1], "displacement": r[2]} for r in rows}


# ---------------------------------------------------------------------------
# oracle and twist runners


def _sq_dist(a, b):
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)


def run_oracle(cfg: OracleConfig, out_dir=None) -> list:
    """Exact OT vs entropic UOT transport cost on random instances.

    For instances with at most ``brute_force_max_n`` points the assignment is
    also checked against exhaustive permutation search. A closing row compares
    the Gaussian closed form with exact OT on a large sample.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = Rng(cfg.seed)
    rows = []
    for i in range(cfg.n_instances):
        rng = root.stream(100 + i)
        n = cfg.n_points
        src = rng.normal((n, cfg.dim))
        tgt = rng.normal((n, cfg.dim)) + 1.0
        c = _sq_dist(src, tgt)
        ot = solve_ot_exact(DiscreteMeasure.uniform(src), DiscreteMeasure.uniform(tgt), c)
        uot = solve_uot_entropic(DiscreteMeasure.uniform(src), DiscreteMeasure.uniform(tgt), c, cfg.eps, cfg.rho, cfg.rho)
        ot_cost, uot_cost = ot.transport_cost(c), uot.transport_cost(c)
        m = min(n, cfg.brute_force_max_n)
        sub = c[:m, :m]
        brute, _ = brute_force_assignment(sub)
        exact_small = solve_ot_exact(DiscreteMeasure.uniform(src[:m]), DiscreteMeasure.uniform(tgt[:m]), sub)
        match = bool(abs(exact_small.transport_cost(sub) - brute / m) <= 1e-12 * max(1.0, abs(brute)))
        rows.append([i, n, ot_cost, uot_cost, (uot_cost - ot_cost) / ot_cost, match])
    write_csv(out_dir / "oracle.csv", ORACLE_COLUMNS, rows)
    g = gaussian_ot_map([0.0], [2.0], 1.0, 2.0)
    write_csv(out_dir / "gaussian_closed_form.csv", ("m1", "m2", "s1", "s2", "scale", "shift", "w2_squared"),
              [[0.0, 2.0, 1.0, 2.0, g.scale, float(g.shift[0]), g.sq_cost]])
    return rows


def run_twist(cfg: TwistConfig, out_dir=None) -> list:
    """Grid injectivity verdicts next to the ``lam > L`` criterion."""
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    op = cfg.op.build()
    lip = op.lipschitz_estimate(rng=Rng(cfg.seed))
    grid = grid_2d(cfg.grid_lo, cfg.grid_hi, cfg.grid_n)
    rows = []
    for lam in cfg.lams:
        verdict = twist_check(op, lam, grid)
        rows.append([lam, lip, bool(lam > lip), str(verdict)])
    write_csv(out_dir / "twist.csv", TWIST_COLUMNS, rows)
    return rows

