"""``uot-lab`` command line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config, load_oracle_config, load_twist_config
from .errors import ConfigError
from .experiments import (
    EXIT_CONFIG,
    EXIT_OK,
    evaluate_run,
    run_experiment,
    run_fig1,
    run_oracle,
    run_sweep,
    run_twist,
)

log = logging.getLogger("uot_lab")


def _train(args):
    cfg = load_config(args.config, args.seed, args.out)
    res = run_experiment(cfg)
    for m in res.metrics:
        if m.step == res.state.step:
            print(f"{m.name}\t{m.value:.6g}")
    if res.status != EXIT_OK:
        print(f"diverged: {res.reason}; partial artifacts in {res.out_dir}", file=sys.stderr)
    return res.status


def _eval(args):
    cfg = load_config(args.config, args.seed, args.out)
    for m in evaluate_run(cfg):
        print(f"{m.name}\t{m.value:.6g}")
    return EXIT_OK


def _sweep(args):
    cfg = load_config(args.config, args.seed, args.out)
    status, rows = run_sweep(cfg)
    for row in rows:
        print(json.dumps(row))
    return status


def _fig1(args):
    cfg = load_config(args.config, args.seed, args.out)
    status, summary = run_fig1(cfg)
    lik, quad = summary["likelihood"], summary["quadratic"]
    print(f"likelihood-only\tresidual={lik['residual']:.6g}\tdisplacement={lik['displacement']:.6g}")
    print(f"quadratic-only\tresidual={quad['residual']:.6g}\tdisplacement={quad['displacement']:.6g}")
    return status


def _oracle(args):
    cfg = load_oracle_config(args.config, args.seed, args.out)
    rows = run_oracle(cfg)
    worst = max(r[4] for r in rows)
    matches = all(r[5] for r in rows)
    print(f"instances={len(rows)}\tmax_relative_gap={worst:.4g}\tbrute_force_match={matches}")
    return EXIT_OK


def _twist(args):
    cfg = load_twist_config(args.config, args.seed, args.out)
    for lam, lip, analytic, verdict in run_twist(cfg):
        print(f"lam={lam:g}\tL={lip:.10g}\tlam>L={analytic}\t{verdict}")
    return EXIT_OK


COMMANDS = {
    "train": (_train, "train one experiment and write its artifacts"),
    "eval": (_eval, "recompute metrics from a trained run's checkpoint"),
    "oracle": (_oracle, "compare exact OT, entropic UOT and brute force on random instances"),
    "twist-check": (_twist, "grid injectivity check against the lam > L criterion"),
    "sweep": (_sweep, "run the tau / cost-term grid and write sweep.csv"),
    "fig1": (_fig1, "likelihood-only vs quadratic-only maps on one dataset"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="uot-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config (or a run manifest)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
