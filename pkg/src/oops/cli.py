"""Command line entry point: ``oops <subcommand> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config import load_config
from .envs import ExpertPolicySpec, generate_experts, make_env, write_trajectories
from .exceptions import ConfigError, DataError, DivergenceError, OOPSError
from .plotting import plot_files

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("oops")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def parse_grid(text: str) -> list:
    """``a:b:step`` (inclusive arithmetic grid) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ConfigError(f"bad grid {text!r}: need a <= b and step > 0")
            n = int(np.floor((b - a) / step + 1e-9)) + 1
            return [round(a + k * step, 12) for k in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}") from exc


def parse_lambda_grid(text: str) -> list:
    """Comma list, or ``lo:hi:n`` for ``n`` log-spaced values."""
    if ":" in text:
        try:
            lo, hi, n = text.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
        except ValueError as exc:
            raise ConfigError(f"bad lambda grid {text!r}") from exc
        if lo <= 0 or hi < lo or n < 1:
            raise ConfigError(f"bad lambda grid {text!r}")
        return [float(x) for x in np.logspace(np.log10(lo), np.log10(hi), n)]
    grid = parse_grid(text)
    if not grid or min(grid) <= 0:
        raise ConfigError("lambda values must be positive")
    return grid


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-key override, repeatable")
    p.add_argument("--out", help=out_help)
    p.add_argument("--seed", type=int)
    p.add_argument("--env", choices=["pointmass", "gridworld"])
    p.add_argument("--experts", help="expert JSONL file")
    p.add_argument("--n-experts", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oops", description="State-only imitation with optimal transport rewards.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate-expert", help="write scripted expert trajectories as JSONL")
    _common(p, "output JSONL path")
    p.add_argument("--noise", type=float, default=0.0, help="expert noise level")

    p = sub.add_parser("train", help="train a learner from proxy rewards")
    _common(p, "directory receiving the run directory (default runs)")
    p.add_argument("--steps", type=int)

    p = sub.add_parser("calibrate", help="proxy vs true return across noise levels")
    _common(p, "output directory (default .)")
    p.add_argument("--noise-grid", default="0:1.5:0.1", help="a:b:step")
    p.add_argument("--episodes", type=int, default=5, help="episodes per noise level")

    p = sub.add_parser("solver-sweep", help="transport cost per solver and lambda")
    _common(p, "output directory (default .)")
    p.add_argument("--lambda-grid", default="0.001:1.0:16", help="lo:hi:n (log-spaced) or a comma list")
    p.add_argument("--pairs", type=int, default=100)

    p = sub.add_parser("occupancy-eval", help="distance to experts in (s), (s,s') and (s,a)")
    _common(p, "output directory (default: the run directory)")
    p.add_argument("--run", required=True, help="run directory holding config.snapshot and checkpoints/")
    p.add_argument("--episodes", type=int, default=10)

    p = sub.add_parser("ablate", help="final normalized return along one ablation axis")
    _common(p, "output directory (default .)")
    p.add_argument("--axis", required=True, choices=sorted(harness.ABLATION_AXES))
    p.add_argument("--values", help="comma-separated axis values (default: all for the axis)")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds per value")
    p.add_argument("--steps", type=int)

    p = sub.add_parser("plot", help="render CSVs as SVG charts")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", default=".", help="output directory")
    return parser


def _run_config(args, base=None):
    flags = list(args.set)
    for attr, key in (("seed", "seed"), ("env", "env"), ("experts", "experts"),
                      ("n_experts", "n_experts"), ("steps", "total_steps")):
        value = getattr(args, attr, None)
        if value is not None:
            flags.append(f"{key}={json.dumps(value)}")
    return load_config(args.config, flags, base=base)


def cmd_generate_expert(args) -> int:
    cfg = _run_config(args)
    if not args.out:
        raise ConfigError("generate-expert needs --out PATH")
    env = make_env(cfg.env, **cfg.env_kwargs)
    trajs = generate_experts(env, ExpertPolicySpec(noise_std=args.noise), cfg.n_experts, seed=cfg.expert_seed)
    write_trajectories(args.out, trajs)
    print(f"wrote {len(trajs)} trajectories to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    result = harness.train(cfg, out_dir=args.out or "runs")
    print(result.run_dir)
    print(f"final true return {result.final_return:.4f}, normalized {result.final_normalized:.4f}")
    if result.status != "ok":
        print(f"error: run diverged: {result.error}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _run_config(args, base={"env": "pointmass"})
    env = make_env(cfg.env, **cfg.env_kwargs)
    experts = harness.load_experts(cfg, env)
    res = harness.calibrate(cfg.env, parse_grid(args.noise_grid), args.episodes, cfg.reward.build(),
                            experts=experts, expert_seed=cfg.expert_seed, env_kwargs=cfg.env_kwargs)
    out = Path(args.out or ".")
    harness.write_csv(out / "calibration.csv", harness.CALIBRATION_HEADER, res.rows)
    print(f"spearman {res.spearman:.4f} pearson {res.pearson:.4f}")
    return EXIT_OK


def cmd_solver_sweep(args) -> int:
    cfg = _run_config(args, base={"env": "pointmass"})
    pairs = harness.rollout_pairs(cfg.env, args.pairs, seed=cfg.seed, env_kwargs=cfg.env_kwargs)
    res = harness.solver_sweep(pairs, parse_lambda_grid(args.lambda_grid), cfg.reward.build())
    out = Path(args.out or ".")
    harness.write_csv(out / "sweep.csv", harness.SWEEP_HEADER, res.rows)
    for row in res.rows:
        print(f"{row['solver']:>8} {row['lambda']!s:>12} {row['mean_distance']:.6f}")
    return EXIT_OK


def cmd_occupancy_eval(args) -> int:
    run = Path(args.run)
    snapshot = run / "config.snapshot"
    if not snapshot.is_file():
        raise DataError(f"no config.snapshot in {run}")
    cfg = load_config(snapshot, args.set)
    if args.experts is None and (run / "trajectories" / "experts.jsonl").is_file() and not cfg.experts:
        cfg = cfg.replace(experts=str(run / "trajectories" / "experts.jsonl"))
    elif args.experts is not None:
        cfg = cfg.replace(experts=args.experts)
    res = harness.occupancy_eval_checkpoint(run / "checkpoints" / "final.npz", cfg,
                                            cfg.reward.build().metric, args.episodes,
                                            cfg.seed if args.seed is None else args.seed)
    row = {"policy": "learner", **{k: res.get(k, "") for k in ("s", "ss", "sa")}}
    out = Path(args.out or run)
    harness.write_csv(out / "occupancy.csv", harness.OCCUPANCY_HEADER, [row])
    print(", ".join(f"{k}={v:.6f}" for k, v in res.items()))
    return EXIT_OK


_DEFAULT_VALUES = {
    "occupancy": ["s", "ss", "sa"],
    "solver": ["sinkhorn", "greedy", "exact"],
    "lambda": [0.01, 0.05, 0.1, 0.5],
    "metric": list(harness.METRIC_VARIANTS),
}


def cmd_ablate(args) -> int:
    cfg = _run_config(args)
    values = [v.strip() for v in args.values.split(",")] if args.values else _DEFAULT_VALUES[args.axis]
    if args.seeds < 1:
        raise ConfigError("--seeds must be positive")
    seeds = [cfg.seed + k for k in range(args.seeds)]
    res = harness.ablation_grid(cfg, args.axis, values, seeds)
    out = Path(args.out or ".")
    harness.write_csv(out / "ablation.csv", harness.ABLATION_HEADER, res.rows)
    for row in res.rows:
        print(f"{row['value']:>20} {row['normalized_return_mean']:.4f} ({row['percent_difference']:+.2f}%)")
    failed = [r for runs in res.runs.values() for r in runs if r.status != "ok"]
    return EXIT_DIVERGED if failed else EXIT_OK


def cmd_plot(args) -> int:
    for path in plot_files(args.csv, args.out):
        print(path)
    return EXIT_OK


COMMANDS = {
    "generate-expert": cmd_generate_expert,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "solver-sweep": cmd_solver_sweep,
    "occupancy-eval": cmd_occupancy_eval,
    "ablate": cmd_ablate,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OOPSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
