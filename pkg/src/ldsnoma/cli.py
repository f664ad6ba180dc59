"""Command-line front end.

    ldsnoma evaluate   [--scenario PATH --matrix PATH | drop options]
    ldsnoma allocate   --out MATRIX.txt [--scenario-out SCN.txt]
    ldsnoma sweep-k    --out rows.csv
    ldsnoma sweep-d    --out rows.csv
    ldsnoma epsilon    --out eps.csv
    ldsnoma visualize  --out alloc.csv   (also writes alloc_eta.csv)

Values from ``--config`` are overridden by explicit flags.  Exit status is
0 only when every fixed point converged.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .allocator import METHODS, build
from .detequiv import ConvergenceError
from .model import RandomStream, Scenario, SpreadingMatrix
from .montecarlo import mc_emi_many

COMMAND_KIND = {
    "evaluate": "evaluate",
    "allocate": "allocate",
    "sweep-k": "sweep-K",
    "sweep-d": "sweep-d",
    "epsilon": "epsilon",
    "visualize": "visualize-allocation",
}

# Defaults that differ from ExperimentConfig's, per command.
COMMAND_DEFAULTS = {
    "sweep-k": dict(K=(50, 75, 100, 125, 150), d=(1,)),
    "sweep-d": dict(K=(150,), d=(1, 2, 3, 5, 6)),
    "epsilon": dict(K=(100,), d=(1, 2, 4, 8, 16, 50), methods=("random",), fading_trials=1000),
    "visualize": dict(F=30, K=(90,), d=(2,), methods=("greedy",)),
    "allocate": dict(methods=("greedy",)),
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--drops", type=int)
    common.add_argument("--trials", type=int, dest="fading_trials",
                        help="fading realizations per evaluation")
    common.add_argument("--methods", help=f"comma list from {','.join(METHODS)}")
    common.add_argument("--out", metavar="PATH", help="output file (stdout if omitted)")
    common.add_argument("-F", type=int, dest="F", help="number of sub-channels")
    common.add_argument("-K", dest="K", help="number of UEs (list for sweep-k)")
    common.add_argument("-d", dest="d", help="sparsity (list for sweep-d / epsilon)")
    common.add_argument("--matrices", type=int, help="random matrices per d (epsilon)")
    common.add_argument("--workers", type=int, help="threads for drops/trials")
    common.add_argument("--no-mc", dest="mc", action="store_false", default=None,
                        help="skip Monte-Carlo EMI")
    unit = common.add_mutually_exclusive_group()
    unit.add_argument("--bits", dest="unit", action="store_const", const="bits")
    unit.add_argument("--nats", dest="unit", action="store_const", const="nats")

    p = argparse.ArgumentParser(prog="ldsnoma", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    ev = sub.add_parser("evaluate", parents=[common],
                        help="deterministic and Monte-Carlo EMI per method and drop")
    ev.add_argument("--scenario", metavar="PATH", help="scenario document to evaluate")
    ev.add_argument("--matrix", metavar="PATH", help="spreading matrix (needs --scenario)")
    al = sub.add_parser("allocate", parents=[common], help="spreading matrix for one drop")
    al.add_argument("--scenario", metavar="PATH", help="allocate for this scenario")
    al.add_argument("--scenario-out", metavar="PATH", help="also save the drop")
    sub.add_parser("sweep-k", parents=[common], help="rates versus number of UEs")
    sub.add_parser("sweep-d", parents=[common], help="rates versus sparsity")
    sub.add_parser("epsilon", parents=[common], help="residual-term statistics versus d")
    sub.add_parser("visualize", parents=[common], help="greedy allocation triplets and loads")
    return p


def build_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    """Command defaults, then the config file, then explicit flags."""
    values = dict(COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        values.update(harness.ExperimentConfig.parse_values(Path(args.config).read_text()))
    for key in ("seed", "drops", "fading_trials", "methods", "out", "F", "K", "d",
                "matrices", "workers", "mc"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values["kind"] = COMMAND_KIND[args.command]
    return harness.ExperimentConfig(**values)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _evaluate(args, cfg, unit) -> None:
    if not args.scenario:
        if args.matrix:
            raise ValueError("--matrix needs --scenario")
        rows = [r for K in cfg.K for d in cfg.d for i in range(cfg.drops)
                for r in harness.evaluate_drop(cfg, K, d, i)]
        _emit(harness.write_csv(rows, unit=unit), cfg.out)
        return
    scn = Scenario.load(args.scenario)
    root = RandomStream(cfg.seed)
    if args.matrix:
        mats = {"file": SpreadingMatrix.load(args.matrix)}
    else:
        mats = {m: build(m, scn, root.spawn("random")) for m in cfg.methods}
    if cfg.mc:
        ests = mc_emi_many(scn, list(mats.values()), cfg.fading_trials,
                           root.spawn("fading"), workers=cfg.workers)
    else:
        ests = [None] * len(mats)
    rows = []
    for (name, V), e in zip(mats.items(), ests):
        dg = harness.evaluate_matrix(scn, V)
        rows.append(harness.ResultRow(
            name, scn.F, scn.K, int(scn.sparsity.max()), 0, dg["det_emi"],
            None if e is None else e.mean, None if e is None else e.stderr,
            dg["eta_max"], dg["eta_min"], dg["kkt_residual_max"]))
    _emit(harness.write_csv(rows, unit=unit), cfg.out)


def _print_summary(rows, unit) -> None:
    summary = harness.summarize(rows)
    sys.stderr.write(harness.write_csv(summary, unit=unit,
                                       columns=harness.SUMMARY_COLUMNS,
                                       rate_columns=harness.SUMMARY_RATES))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    unit = args.unit or "bits"
    try:
        cfg = build_config(args)
    except harness.ConfigError as exc:
        print(f"ldsnoma: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "evaluate":
            _evaluate(args, cfg, unit)
        elif args.command in ("sweep-k", "sweep-d"):
            run = harness.run_sweep_K if args.command == "sweep-k" else harness.run_sweep_d
            rows = run(cfg)
            _emit(harness.write_csv(rows, unit=unit), cfg.out)
            _print_summary(rows, unit)
        elif args.command == "epsilon":
            rows = harness.run_epsilon(cfg)
            _emit(harness.write_csv(rows, unit=unit, columns=harness.EPSILON_COLUMNS,
                                    rate_columns=harness.EPSILON_RATES), cfg.out)
        elif args.command == "allocate":
            if args.scenario:
                scn = Scenario.load(args.scenario)
                V = build(cfg.methods[0], scn, RandomStream(cfg.seed).spawn("random"))
            else:
                scn, V = harness.allocate(cfg)
            if args.scenario_out:
                scn.save(args.scenario_out)
            _emit(V.to_text(), cfg.out)
        elif args.command == "visualize":
            table = harness.visualize_allocation(cfg)
            trip = harness.write_csv(table.triplets, columns=("f", "k", "v", "beta"),
                                     rate_columns=())
            eta = harness.write_csv(table.subchannels, columns=("f", "eta"), rate_columns=())
            if cfg.out:
                out = Path(cfg.out)
                out.write_text(trip)
                out.with_name(out.stem + "_eta" + out.suffix).write_text(eta)
            else:
                sys.stdout.write(trip + "\n" + eta)
    except ConvergenceError as exc:
        print(f"ldsnoma: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"ldsnoma: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
