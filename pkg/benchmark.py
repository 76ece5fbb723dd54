"""
Synthetic benchmark: NOTEARS vs path constraints vs interventional constraints.

Every trial derives its seeds from (grid seed, cell, trial) so results do not
depend on the number of workers. Per-trial failures become rows with
status "error" and are counted in the summary.
"""

import itertools
import logging
import os
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np
import pandas as pd
from tqdm import tqdm

from lin_cd_path import PathConfig, lin_cd_path_fit, path_constraints_from_effects
from lin_cdic import CdicConfig, lin_cdic_fit, notears_fit
from metrics import evaluate
from objective import ObjectiveConfig
from synth import SynthConfig, gen_scale_free_dag, sample_constraints, sample_data

logger = logging.getLogger(__name__)

METHODS = ("notears", "cd-path", "cdic")
METRICS = ("FDR", "TPR", "FPR", "SHD", "SID", "SCS", "NNZ", "Time")
CELL_KEYS = ["n", "m", "method", "epsilon"]


@dataclass(frozen=True)
class BenchmarkGrid:
    methods: tuple = METHODS
    d: int = 20
    sample_sizes: tuple = (100,)
    constraint_counts: tuple = (2,)
    trials: int = 20
    seed: int = 0
    epsilons: tuple = (0.25,)
    violated_only: bool = False
    attempts_per_trial: int = 5
    lambda_: float = 0.1
    omega: float = 0.3
    delta_init: float = 0.01
    workers: int = 1

    def __post_init__(self):
        for name in ("methods", "sample_sizes", "constraint_counts", "epsilons"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    def cells(self):
        return list(itertools.product(self.sample_sizes, self.constraint_counts))


def trial_seeds(seed, cell, trial):
    """Independent (graph, data, constraint) seeds for one trial."""
    state = np.random.SeedSequence([seed, cell, trial]).generate_state(3)
    return tuple(int(s) for s in state)


def _metric_row(base, method, epsilon, report, gt, omega):
    metrics = evaluate(gt.W_true, report.W_star, omega, timing=report.wall_time)
    return dict(
        base,
        method=method,
        epsilon=epsilon,
        status=report.status,
        satisfied=all(report.constraint_flags),
        FDR=metrics.fdr,
        TPR=metrics.tpr,
        FPR=metrics.fpr,
        SHD=metrics.shd,
        SID=metrics.sid,
        SCS=metrics.scs,
        NNZ=metrics.nnz,
        Time=metrics.timing,
        error="",
    )


def _error_row(base, method, epsilon, exc):
    row = dict(base, method=method, epsilon=epsilon, status="error", satisfied=False, error=str(exc))
    row.update({m: np.nan for m in METRICS})
    return row


def method_labels(grid):
    """(method, epsilon) pairs reported for every trial."""
    labels = []
    for method in grid.methods:
        if method == "cdic":
            labels.extend((method, eps) for eps in grid.epsilons)
        else:
            labels.append((method, PathConfig().epsilon if method == "cd-path" else 0.0))
    return labels


def run_trial(task):
    """Run every method on one seeded instance; returns (rows, kept)."""
    grid, cell, n, m, trial = task
    g_seed, x_seed, c_seed = trial_seeds(grid.seed, cell, trial)
    base = {"n": n, "m": m, "trial": trial}
    objcfg = ObjectiveConfig(grid.lambda_)
    try:
        gt = gen_scale_free_dag(SynthConfig(d=grid.d, n=n, seed=g_seed))
        X = sample_data(gt, n, seed=x_seed)
        constraints = sample_constraints(gt, m, seed=c_seed, delta_init=grid.delta_init)
    except Exception as e:
        logger.warning("trial %d of cell %d could not be generated: %s", trial, cell, e)
        return [_error_row(base, method, eps, e) for method, eps in method_labels(grid)], True

    cdic_base = CdicConfig(omega=grid.omega, delta_init=grid.delta_init)
    rows = []
    baseline = None
    if "notears" in grid.methods or grid.violated_only:
        try:
            baseline = notears_fit(X, constraints, cdic_base, objcfg)
        except Exception as e:
            if grid.violated_only:
                return [], False
            rows.append(_error_row(base, "notears", 0.0, e))
        if grid.violated_only and baseline is not None and all(baseline.constraint_flags):
            return [], False
        if baseline is not None and "notears" in grid.methods:
            rows.append(_metric_row(base, "notears", 0.0, baseline, gt, grid.omega))

    if "cd-path" in grid.methods:
        path_cfg = PathConfig(omega=grid.omega)
        try:
            report = lin_cd_path_fit(X, path_constraints_from_effects(constraints), path_cfg, objcfg)
            rows.append(_metric_row(base, "cd-path", path_cfg.epsilon, report, gt, grid.omega))
        except Exception as e:
            rows.append(_error_row(base, "cd-path", path_cfg.epsilon, e))

    if "cdic" in grid.methods:
        for eps in grid.epsilons:
            cfg = CdicConfig(omega=grid.omega, epsilon=eps, delta_init=grid.delta_init)
            try:
                report = lin_cdic_fit(X, constraints, cfg, objcfg)
                rows.append(_metric_row(base, "cdic", eps, report, gt, grid.omega))
            except Exception as e:
                rows.append(_error_row(base, "cdic", eps, e))
    return rows, True


def _tasks(grid):
    attempts = grid.trials * (grid.attempts_per_trial if grid.violated_only else 1)
    return [(grid, cell, n, m, t)
            for cell, (n, m) in enumerate(grid.cells())
            for t in range(attempts)]


def _collect(grid, results):
    """Keep the first ``trials`` accepted attempts of every cell, in attempt order."""
    by_cell = {}
    for (task, (rows, kept)) in results:
        _, cell, _, _, trial = task
        if kept:
            by_cell.setdefault(cell, []).append((trial, rows))
    all_rows = []
    for cell in sorted(by_cell):
        accepted = sorted(by_cell[cell], key=lambda item: item[0])[: grid.trials]
        if len(accepted) < grid.trials:
            logger.warning("cell %d: only %d of %d trials accepted", cell, len(accepted), grid.trials)
        for _, rows in accepted:
            all_rows.extend(rows)
    return all_rows


def summarize(raw):
    """Mean and population variance per (cell, method, metric); SCS also summed."""
    records = []
    for key, group in raw.groupby(CELL_KEYS, sort=True):
        ok = group[group["status"] != "error"]
        failures = int((group["status"] == "error").sum())
        for metric in METRICS:
            values = ok[metric].astype(float)
            records.append(dict(
                zip(CELL_KEYS, key),
                metric=metric,
                mean=float(values.mean()) if len(values) else np.nan,
                variance=float(values.var(ddof=0)) if len(values) else np.nan,
                total=float(values.sum()) if metric == "SCS" else np.nan,
                trials=int(len(group)),
                failures=failures,
            ))
    return pd.DataFrame.from_records(records)


def run_benchmark(grid, out_dir=None):
    """Run the grid; returns (raw, summary) frames and writes raw.csv / summary.csv to out_dir."""
    tasks = _tasks(grid)
    logger.info("benchmark: %d cells, %d trial attempts, %d workers",
                len(grid.cells()), len(tasks), grid.workers)
    if grid.workers == 1:
        results = [(task, run_trial(task)) for task in tqdm(tasks, desc="trials")]
    else:
        with Pool(grid.workers) as pool:
            outputs = list(tqdm(pool.imap(run_trial, tasks), total=len(tasks), desc="trials"))
        results = list(zip(tasks, outputs))

    columns = ["n", "m", "trial", "method", "epsilon", "status", "satisfied", *METRICS, "error"]
    raw = pd.DataFrame.from_records(_collect(grid, results), columns=columns)
    raw = raw.sort_values(["n", "m", "trial", "method", "epsilon"], kind="mergesort").reset_index(drop=True)
    summary = summarize(raw)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        raw.to_csv(os.path.join(out_dir, "raw.csv"), index=False)
        summary.to_csv(os.path.join(out_dir, "summary.csv"), index=False)
        logger.info("benchmark tables written to %s", out_dir)
    return raw, summary
