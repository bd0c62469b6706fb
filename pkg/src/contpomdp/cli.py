"""Command line entry point: ``contpomdp {run,compare,sweep-disc,solve-qmdp}``."""

from __future__ import annotations

import argparse
import logging
import sys
import tempfile
from pathlib import Path

from contpomdp.baselines import enumerate_model, value_iterate
from contpomdp.core import ConfigurationError
from contpomdp.domains import REGISTRY
from contpomdp.harness.config import SOLVERS, ExperimentConfig, load_config
from contpomdp.harness.experiment import build_model, run_comparison, run_discretization_sweep, run_experiment


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key-value config file")
    p.add_argument("--domain", choices=sorted(REGISTRY))
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    budget = p.add_mutually_exclusive_group()
    budget.add_argument("--iterations", type=int, help="tree simulations per decision")
    budget.add_argument("--time-budget-ms", type=float, help="wall-clock budget per decision")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--small", action="store_true", default=None, help="reduced 10x10 Sub Hunt grid")
    p.add_argument("--workers", type=int, help="episode worker processes")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--filter-particles", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contpomdp", description="Online POMDP tree search experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one solver on one domain")
    _common(run)
    run.add_argument("--solver")
    run.add_argument("--obs-width", type=float, help="observation bin width for discretized POMCP")
    run.add_argument("--tree-dump", help="directory for JSON tree dumps (debugging)")

    cmp_ = sub.add_parser("compare", help="domains x solvers table of mean returns")
    _common(cmp_)
    cmp_.add_argument("--domains", nargs="+", default=None)
    cmp_.add_argument("--solvers", nargs="+", default=["pomcpow", "pft_dpw", "pomcp_dpw", "pomcp", "qmdp"])

    sweep = sub.add_parser("sweep-disc", help="discretized POMCP over observation bin widths")
    _common(sweep)
    sweep.add_argument("--widths", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0, 4.0])

    qmdp = sub.add_parser("solve-qmdp", help="solve and cache a QMDP table")
    qmdp.add_argument("--domain", choices=sorted(REGISTRY), required=True)
    qmdp.add_argument("--small", action="store_true")
    qmdp.add_argument("--tol", type=float, default=1e-3)
    qmdp.add_argument("--out", required=True, help="binary Q-table path")
    qmdp.add_argument("--config", type=Path)
    qmdp.add_argument("-v", "--verbose", action="store_true")
    return parser


def _experiment(args, **extra) -> ExperimentConfig:
    names = ("domain", "episodes", "seed", "iterations", "time_budget_ms", "out", "small", "workers",
             "max_steps", "filter_particles")
    flags = {name: getattr(args, name, None) for name in names} | extra
    if args.config is not None:
        return load_config(args.config, **flags)
    with tempfile.TemporaryDirectory() as tmp:
        empty = Path(tmp) / "empty.cfg"
        empty.write_text("")
        return load_config(empty, **flags)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = _experiment(args, solver=args.solver, obs_width=args.obs_width, tree_dump=args.tree_dump)
            st = run_experiment(cfg).stats
            print(f"{cfg.domain} {cfg.solver}: mean {st.mean:.3f} sem {st.sem:.3f} n {st.n}")
        elif args.command == "compare":
            cfg = _experiment(args, out=None)
            domains = args.domains or [cfg.domain]
            for domain, solver, st in run_comparison(cfg, domains, args.solvers, out=args.out):
                cell = "unsupported" if st is None else f"{st.mean:.3f} +- {st.sem:.3f} (n={st.n})"
                print(f"{domain:10s} {solver:20s} {cell}")
        elif args.command == "sweep-disc":
            cfg = _experiment(args, out=None, solver="pomcp")
            for width, st in run_discretization_sweep(cfg, args.widths, out=args.out):
                print(f"width {width:g}: {st.mean:.3f} +- {st.sem:.3f} (n={st.n})")
        else:
            cfg = _experiment(args, solver="qmdp", out=None)
            table = value_iterate(enumerate_model(build_model(cfg)), tol=args.tol)
            table.save(args.out)
            print(f"wrote {table.Q.shape[0]}x{table.Q.shape[1]} Q table after {table.iterations} sweeps to {args.out}")
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
