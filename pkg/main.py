"""
Command-line entry point.

    python main.py discover  --data X.csv --constraints C.json --method cdic --out out/
    python main.py benchmark --d 20 --sample-sizes 50 100 --constraint-counts 2 --out bench/
    python main.py sachs     --data sachs.csv --mode effectiveness --out sachs_out/
    python main.py generate  --d 10 --n 100 --m 4 --seed 1 --out instance/

Results are printed as JSON on stdout; logs go to stderr (-v for INFO, -vv for DEBUG).
Failures print {"success": false, "error": ..., "error_type": ...} and exit non-zero.
"""

import argparse
import json
import logging
import os
import sys

import pandas as pd

from benchmark import METHODS, BenchmarkGrid, run_benchmark
from data_io import (
    TraceWriter,
    load_constraints,
    load_dataset,
    write_artifacts,
    write_constraints_json,
    write_dataset,
    write_matrix_csv,
)
from lin_cd_path import PathConfig, lin_cd_path_fit, path_constraints_from_effects
from lin_cdic import CdicConfig, lin_cdic_fit, notears_fit
from metrics import evaluate
from objective import ObjectiveConfig
from sachs import MODES, run_sachs
from sqp_solver import SqpConfig
from synth import SynthConfig, gen_scale_free_dag, sample_constraints, sample_data

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DEFAULT_EPSILON = {"cdic": CdicConfig().epsilon, "cd-path": PathConfig().epsilon, "notears": CdicConfig().epsilon}


class UsageError(Exception):
    """Flags that parse but cannot be used together."""


def configure_logging(verbosity=0):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _print(result):
    print(json.dumps(result, indent=2))


def _load_truth(path, d):
    W = pd.read_csv(path, index_col=0).to_numpy(dtype=float)
    if W.shape != (d, d):
        raise UsageError(f"--truth matrix has shape {W.shape}, data has {d} variables")
    return W


def run_discover(args):
    if args.method in ("cdic", "cd-path") and not args.constraints:
        raise UsageError(f"--method {args.method} needs --constraints")
    X = load_dataset(args.data, standardize=args.standardize, log_transform=args.log_transform)
    effects, paths = [], []
    if args.constraints:
        effects, paths = load_constraints(args.constraints, X.names, delta_init=args.delta_init)
    epsilon = args.epsilon if args.epsilon is not None else DEFAULT_EPSILON[args.method]
    objcfg = ObjectiveConfig(args.lambda_)
    sqp = SqpConfig(max_iter=args.max_iter, tol=args.tol)

    os.makedirs(args.out, exist_ok=True)
    trace = TraceWriter(os.path.join(args.out, "trace.jsonl")) if args.trace else None
    try:
        if args.method == "notears":
            cfg = CdicConfig(omega=args.omega, delta_init=args.delta_init, h_tol=args.h_tol, sqp=sqp)
            report = notears_fit(X, effects, cfg, objcfg)
        elif args.method == "cd-path":
            cfg = PathConfig(omega=args.omega, epsilon=epsilon, h_tol=args.h_tol, sqp=sqp)
            given = paths + [p for p in path_constraints_from_effects(effects)
                             if (p.cause, p.target) not in {(q.cause, q.target) for q in paths}]
            report = lin_cd_path_fit(X, given, cfg, objcfg, trace=trace)
        else:
            if not effects:
                raise UsageError("--method cdic needs at least one effect constraint")
            cfg = CdicConfig(omega=args.omega, epsilon=epsilon, delta_init=args.delta_init,
                             h_tol=args.h_tol, sqp=sqp)
            report = lin_cdic_fit(X, effects, cfg, objcfg, trace=trace)
    finally:
        if trace is not None:
            trace.close()

    if args.truth:
        W_true = _load_truth(args.truth, X.d)
        report.metrics = evaluate(W_true, report.W_star, args.omega, timing=report.wall_time).to_dict()
    paths_written = write_artifacts(report, args.out, X.names)
    return {
        "success": report.success,
        "method": report.method,
        "status": report.status,
        "nnz": report.graph.nnz,
        "h": report.h,
        "constraints": [
            {"cause": X.names[c.cause], "target": X.names[c.target], "satisfied": c.satisfied,
             "escalations": c.escalations}
            for c in report.constraints
        ],
        "metrics": report.metrics,
        "wall_time": report.wall_time,
        "artifacts": paths_written,
    }


def run_benchmark_command(args):
    grid = BenchmarkGrid(
        methods=tuple(args.methods),
        d=args.d,
        sample_sizes=tuple(args.sample_sizes),
        constraint_counts=tuple(args.constraint_counts),
        trials=args.trials,
        seed=args.seed,
        epsilons=tuple(args.epsilons),
        violated_only=args.violated_only,
        lambda_=args.lambda_,
        omega=args.omega,
        workers=args.workers,
    )
    raw, summary = run_benchmark(grid, args.out)
    failures = int((raw["status"] == "error").sum())
    return {"success": True, "rows": int(len(raw)), "failures": failures,
            "artifacts": {"raw": os.path.join(args.out, "raw.csv"),
                          "summary": os.path.join(args.out, "summary.csv")}}


def run_sachs_command(args):
    result = run_sachs(
        args.data,
        mode=args.mode,
        epsilons=tuple(args.epsilons),
        lambda_=args.lambda_,
        omega=args.omega,
        standardize=not args.no_standardize,
        log_transform=args.log_transform,
        limit=args.limit,
        out_dir=args.out,
    )
    return {"success": True, "mode": result.mode,
            "effects": json.loads(result.effects.to_json(orient="index")),
            "metrics": json.loads(result.metrics.to_json(orient="index"))}


def run_generate(args):
    gt = gen_scale_free_dag(SynthConfig(d=args.d, n=args.n, seed=args.seed))
    X = sample_data(gt, args.n, seed=args.seed + 1)
    constraints = sample_constraints(gt, args.m, seed=args.seed + 2, delta_init=args.delta_init)
    os.makedirs(args.out, exist_ok=True)
    paths = {
        "data": os.path.join(args.out, "data.csv"),
        "truth": os.path.join(args.out, "truth.csv"),
        "constraints": os.path.join(args.out, "constraints.json"),
    }
    write_dataset(X, paths["data"])
    write_matrix_csv(gt.W_true, X.names, paths["truth"])
    write_constraints_json(constraints, X.names, paths["constraints"])
    return {"success": True, "d": args.d, "n": args.n, "edges": gt.graph.nnz,
            "constraints": len(constraints), "artifacts": paths}


def build_parser():
    parser = argparse.ArgumentParser(description="Linear causal discovery with interventional constraints")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-v", "--verbose", action="count", default=0, help="-v INFO, -vv DEBUG")
        p.add_argument("--lambda", dest="lambda_", type=float, default=ObjectiveConfig().lambda_,
                       help="l1 weight (default 0.1)")
        p.add_argument("--omega", type=float, default=CdicConfig().omega, help="edge threshold (default 0.3)")

    p = sub.add_parser("discover", help="learn a DAG from one dataset")
    common(p)
    p.add_argument("--data", required=True, help="CSV of samples, optional header row")
    p.add_argument("--constraints", help="constraint file (CSV or JSON)")
    p.add_argument("--method", choices=["notears", "cd-path", "cdic"], default="cdic")
    p.add_argument("--epsilon", type=float, help="escalation step (default 0.25 cdic, 0.01 cd-path)")
    p.add_argument("--delta-init", type=float, default=CdicConfig().delta_init)
    p.add_argument("--h-tol", type=float, default=CdicConfig().h_tol)
    p.add_argument("--max-iter", type=int, default=SqpConfig().max_iter)
    p.add_argument("--tol", type=float, default=SqpConfig().tol)
    p.add_argument("--standardize", action="store_true", help="zero-mean, unit-variance columns")
    p.add_argument("--log-transform", action="store_true", help="natural log before standardizing")
    p.add_argument("--truth", help="true weight matrix CSV; adds metrics to the report")
    p.add_argument("--trace", action="store_true", help="write solver iterations to trace.jsonl")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(handler=run_discover)

    p = sub.add_parser("benchmark", help="synthetic benchmark grid")
    common(p)
    p.add_argument("--methods", nargs="+", choices=list(METHODS), default=list(METHODS))
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--sample-sizes", nargs="+", type=int, default=[100])
    p.add_argument("--constraint-counts", nargs="+", type=int, default=[2])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilons", nargs="+", type=float, default=[0.25])
    p.add_argument("--violated-only", action="store_true",
                   help="keep only trials whose NOTEARS output violates a constraint")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="benchmark_out")
    p.set_defaults(handler=run_benchmark_command)

    p = sub.add_parser("sachs", help="protein signalling experiments")
    common(p)
    p.add_argument("--data", required=True, help="observational Sachs CSV (853 rows)")
    p.add_argument("--mode", choices=list(MODES), default="effectiveness")
    p.add_argument("--epsilons", nargs="+", type=float, default=[0.25, 0.5, 0.75, 1.0])
    p.add_argument("--limit", type=int, help="cap on training combinations (generalization)")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--log-transform", action="store_true")
    p.add_argument("--out", default="sachs_out")
    p.set_defaults(handler=run_sachs_command)

    p = sub.add_parser("generate", help="write a seeded synthetic instance")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta-init", type=float, default=CdicConfig().delta_init)
    p.add_argument("--out", default="instance")
    p.set_defaults(handler=run_generate)
    return parser


def cli_main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        result = args.handler(args)
    except UsageError as e:
        _print({"success": False, "error": str(e), "error_type": "UsageError"})
        return 2
    except Exception as e:
        logger.debug("command failed", exc_info=True)
        _print({"success": False, "error": str(e), "error_type": type(e).__name__})
        return 1
    _print(result)
    return 0 if result.get("success") else 1


if __name__ == "__main__":
    sys.exit(cli_main())
