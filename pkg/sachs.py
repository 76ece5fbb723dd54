"""
Protein-signalling experiments on the observational Sachs flow cytometry data.

Three protocols share the same inputs (data CSV, 20-edge consensus graph,
8 literature constraints of which 3 are used for training):

  effectiveness   NOTEARS, path constraints and interventional constraints
                  for several epsilon values
  robustness      interventional constraints with 0-3 training signs flipped
  generalization  every 3-subset of the 8 constraints used for training
"""

import itertools
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from data_io import load_constraints, load_dataset
from errors import DataFormatError
from lin_cd_path import PathConfig, lin_cd_path_fit, path_constraints_from_effects
from lin_cdic import CdicConfig, lin_cdic_fit, notears_fit
from metrics import evaluate_graphs
from objective import Dataset, ObjectiveConfig
from sem_core import CausalGraph, EffectConstraint

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
CONSENSUS_PATH = os.path.join(DATA_DIR, "sachs_consensus.csv")
CONSTRAINTS_PATH = os.path.join(DATA_DIR, "sachs_constraints.json")

SACHS_VARIABLES = ("Raf", "Mek", "PLCg", "PIP2", "PIP3", "Erk", "Akt", "PKA", "PKC", "P38", "Jnk")
ALIASES = {
    "raf": "Raf", "praf": "Raf",
    "mek": "Mek", "pmek": "Mek", "mek12": "Mek",
    "plc": "PLCg", "plcg": "PLCg", "plcg2": "PLCg",
    "pip2": "PIP2",
    "pip3": "PIP3",
    "erk": "Erk", "p44/42": "Erk", "erk12": "Erk",
    "akt": "Akt", "pakts473": "Akt",
    "pka": "PKA",
    "pkc": "PKC",
    "p38": "P38",
    "jnk": "Jnk", "pjnk": "Jnk",
}
# order in which training signs are flipped for the robustness protocol
FLIP_ORDER = (("PIP3", "Akt"), ("PKC", "P38"), ("PKC", "Jnk"))
MODES = ("effectiveness", "robustness", "generalization")
METRIC_ROWS = ("FDR", "TPR", "FPR", "SHD", "SID", "NNZ", "Time")


@dataclass
class SachsResult:
    mode: str
    effects: pd.DataFrame
    metrics: pd.DataFrame
    reports: dict = field(default_factory=dict)


def load_sachs(path, standardize=True, log_transform=False):
    """Load the cytometry CSV and reorder its columns to SACHS_VARIABLES."""
    raw = load_dataset(path, standardize=False, log_transform=log_transform)
    canonical = []
    for name in raw.names:
        key = name.strip().lower()
        if key not in ALIASES:
            raise DataFormatError(f"{path}: unrecognised protein column {name!r}")
        canonical.append(ALIASES[key])
    missing = set(SACHS_VARIABLES) - set(canonical)
    if missing:
        raise DataFormatError(f"{path}: missing protein columns {sorted(missing)}")
    order = [canonical.index(v) for v in SACHS_VARIABLES]
    dataset = Dataset(raw.samples[:, order], SACHS_VARIABLES)
    return dataset.standardized() if standardize else dataset


def load_consensus(path=CONSENSUS_PATH, names=SACHS_VARIABLES):
    frame = pd.read_csv(path)
    index = {n: k for k, n in enumerate(names)}
    try:
        edges = [(index[c], index[t]) for c, t in zip(frame["cause"], frame["target"])]
    except KeyError as e:
        raise DataFormatError(f"{path}: unknown variable {e.args[0]!r}")
    return CausalGraph.from_edges(len(names), edges, names)


def load_sachs_constraints(path=CONSTRAINTS_PATH, names=SACHS_VARIABLES, delta_init=0.01):
    """All literature constraints in file order, plus the indices marked for training."""
    effects, _ = load_constraints(path, names, delta_init=delta_init)
    with open(path) as f:
        entries = json.load(f)["constraints"]
    training = [k for k, entry in enumerate(entries) if entry.get("training")]
    return effects, training


def _flip(c):
    return EffectConstraint(c.cause, c.target, -c.delta)


def _pair_label(c, names):
    return f"T({names[c.cause]},{names[c.target]})"


def _effect_column(report, constraints):
    return [float(report.T[c.cause, c.target]) for c in constraints]


def _metric_column(report, truth):
    m = evaluate_graphs(truth, report.graph, timing=report.wall_time)
    return [m.fdr, m.tpr, m.fpr, m.shd, m.sid, m.nnz, m.timing]


def _tables(runs, constraints, truth, names):
    effects = pd.DataFrame(
        {label: _effect_column(r, constraints) for label, r in runs.items()},
        index=[_pair_label(c, names) for c in constraints],
    )
    metrics = pd.DataFrame(
        {label: _metric_column(r, truth) for label, r in runs.items()},
        index=list(METRIC_ROWS),
    )
    return effects, metrics


def run_sachs(data_path, mode="effectiveness", epsilons=(0.25, 0.5, 0.75, 1.0),
              lambda_=0.1, omega=0.3, delta_init=0.01, standardize=True,
              log_transform=False, limit=None, out_dir=None,
              consensus_path=CONSENSUS_PATH, constraints_path=CONSTRAINTS_PATH):
    """Run one Sachs protocol; returns a SachsResult and optionally writes effects.csv / metrics.csv."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    X = load_sachs(data_path, standardize=standardize, log_transform=log_transform)
    names = X.names
    truth = load_consensus(consensus_path, names)
    constraints, training_idx = load_sachs_constraints(constraints_path, names, delta_init)
    training = [constraints[k] for k in training_idx]
    objcfg = ObjectiveConfig(lambda_)
    base = CdicConfig(omega=omega, delta_init=delta_init)
    path_cfg = PathConfig(omega=omega)
    logger.info("sachs %s: n=%d, %d training constraints", mode, X.n, len(training))

    runs = {"notears": notears_fit(X, constraints, base, objcfg)}

    if mode == "effectiveness":
        runs["cd-path"] = lin_cd_path_fit(X, path_constraints_from_effects(training), path_cfg, objcfg)
        for eps in epsilons:
            cfg = CdicConfig(omega=omega, epsilon=eps, delta_init=delta_init)
            runs[f"cdic eps={eps:g}"] = lin_cdic_fit(X, training, cfg, objcfg)
        effects, metrics = _tables(runs, constraints, truth, names)

    elif mode == "robustness":
        runs["cd-path"] = lin_cd_path_fit(X, path_constraints_from_effects(training), path_cfg, objcfg)
        cfg = CdicConfig(omega=omega, epsilon=epsilons[0], delta_init=delta_init)
        flip_pairs = [(names.index(a), names.index(b)) for a, b in FLIP_ORDER]
        for k in range(len(flip_pairs) + 1):
            flipped = set(flip_pairs[:k])
            given = [_flip(c) if (c.cause, c.target) in flipped else c for c in training]
            runs[f"cdic IC-{k}"] = lin_cdic_fit(X, given, cfg, objcfg)
        effects, metrics = _tables(runs, constraints, truth, names)

    else:
        cfg = CdicConfig(omega=omega, epsilon=epsilons[0], delta_init=delta_init)
        combos = list(itertools.combinations(range(len(constraints)), len(training)))
        if limit is not None:
            combos = combos[:limit]
        effect_cols = {"cd-path": [], "cdic": []}
        metric_cols = {"cd-path": [], "cdic": []}
        held_out = {"cd-path": [], "cdic": []}
        for combo in combos:
            given = [constraints[k] for k in combo]
            rest = [k for k in range(len(constraints)) if k not in combo]
            combo_runs = {
                "cd-path": lin_cd_path_fit(X, path_constraints_from_effects(given), path_cfg, objcfg),
                "cdic": lin_cdic_fit(X, given, cfg, objcfg),
            }
            for label, report in combo_runs.items():
                effect_cols[label].append(_effect_column(report, constraints))
                metric_cols[label].append(_metric_column(report, truth))
                T = report.T
                held_out[label].append(np.mean([constraints[k].value(T) > 0 for k in rest]))
        runs_effects = {"notears": _effect_column(runs["notears"], constraints)}
        runs_metrics = {"notears": _metric_column(runs["notears"], truth)}
        T0 = runs["notears"].T
        held = {"notears": float(np.mean([c.value(T0) > 0 for c in constraints]))}
        for label in ("cd-path", "cdic"):
            runs_effects[label] = list(np.mean(effect_cols[label], axis=0))
            runs_metrics[label] = list(np.mean(metric_cols[label], axis=0))
            held[label] = float(np.mean(held_out[label]))
        effects = pd.DataFrame(runs_effects, index=[_pair_label(c, names) for c in constraints])
        metrics = pd.DataFrame(runs_metrics, index=list(METRIC_ROWS))
        metrics.loc["held-out satisfied"] = pd.Series(held)
        logger.info("generalization over %d training sets", len(combos))

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        effects.to_csv(os.path.join(out_dir, "effects.csv"))
        metrics.to_csv(os.path.join(out_dir, "metrics.csv"))
    return SachsResult(mode=mode, effects=effects, metrics=metrics, reports=runs)
