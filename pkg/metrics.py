"""
Accuracy of a learned graph against ground truth.

structural_metrics follows the usual count_accuracy convention: a reversed
edge counts as a false discovery and costs one in SHD.
sid counts ordered pairs (i, j) whose causal effect would be mis-estimated by
adjusting for the estimated parents of i, with validity decided by the
generalized adjustment criterion on the true graph.
"""

import logging
import time
from dataclasses import asdict, dataclass
from typing import Optional

import networkx as nx
import numpy as np

from errors import CyclicGraphError, DimensionMismatchError
from sem_core import is_dag, threshold, total_effects

logger = logging.getLogger(__name__)


@dataclass
class MetricsReport:
    fdr: float
    tpr: float
    fpr: float
    shd: int
    sid: int
    nnz: int
    scs: Optional[int] = None
    timing: float = 0.0

    def to_dict(self):
        return asdict(self)


def _same_dim(a, b):
    if a.dim != b.dim:
        raise DimensionMismatchError(f"graphs over {a.dim} and {b.dim} variables")


def structural_metrics(G_true, G_est):
    """Return (fdr, tpr, fpr, shd, nnz) of G_est against G_true."""
    _same_dim(G_true, G_est)
    d = G_true.dim
    B_true = G_true.adjacency
    B_est = G_est.adjacency
    pred = set(G_est.edges())
    cond = set(G_true.edges())
    cond_reversed = {(j, i) for i, j in cond}

    true_pos = len(pred & cond)
    reverse = len((pred & cond_reversed) - cond)
    false_pos = len(pred - cond - cond_reversed)
    cond_neg_size = d * (d - 1) // 2 - len(cond)

    fdr = float(reverse + false_pos) / max(len(pred), 1)
    tpr = float(true_pos) / max(len(cond), 1)
    fpr = min(float(reverse + false_pos) / max(cond_neg_size, 1), 1.0)

    pred_lower = np.tril(B_est | B_est.T, k=-1)
    cond_lower = np.tril(B_true | B_true.T, k=-1)
    extra_lower = int((pred_lower & ~cond_lower).sum())
    missing_lower = int((cond_lower & ~pred_lower).sum())
    shd = extra_lower + missing_lower + reverse
    return fdr, tpr, fpr, shd, len(pred)


def sign_consistency(W_true, W_est):
    """Number of the d*d positions where sgn(W_est) == sgn(W_true), sgn(0) = 0."""
    W_true = np.asarray(W_true, dtype=float)
    W_est = np.asarray(W_est, dtype=float)
    if W_true.shape != W_est.shape:
        raise DimensionMismatchError(f"weight matrices of shape {W_true.shape} and {W_est.shape}")
    return int((np.sign(W_true) == np.sign(W_est)).sum())


def _require_dag(G, what="graph"):
    if not is_dag(G):
        raise CyclicGraphError(f"{what} has a directed cycle")


def d_separated(G, x, y, Z=()):
    """True iff every path between x and y is blocked by Z in the DAG G."""
    _require_dag(G)
    Z = set(Z)
    if x in Z or y in Z:
        raise ValueError("x and y must not be in the conditioning set")
    return nx.is_d_separator(G.to_networkx(), {x}, {y}, Z)


def _adjustment_valid(g_true, i, j, Z, desc_i):
    """Generalized adjustment criterion for the effect of i on j."""
    causal_nodes = {w for w in desc_i if w == j or j in nx.descendants(g_true, w)}
    forbidden = set()
    for w in causal_nodes:
        forbidden |= nx.descendants(g_true, w) | {w}
    if Z & forbidden:
        return False
    if causal_nodes:
        g_true = g_true.copy()
        g_true.remove_edges_from([(i, w) for w in causal_nodes if g_true.has_edge(i, w)])
    return nx.is_d_separator(g_true, {i}, {j}, Z)


def sid(G_true, G_est):
    _same_dim(G_true, G_est)
    _require_dag(G_true, "true graph")
    _require_dag(G_est, "estimated graph")
    g_true = G_true.to_networkx()
    B_est = G_est.adjacency
    wrong = 0
    for i in range(G_true.dim):
        parents = set(int(p) for p in np.flatnonzero(B_est[:, i]))
        desc_i = nx.descendants(g_true, i)
        for j in range(G_true.dim):
            if j == i:
                continue
            if j in parents:
                wrong += j in desc_i
            elif not _adjustment_valid(g_true, i, j, parents, desc_i):
                wrong += 1
    return int(wrong)


def sid_oracle(G_true, G_est, seed=0, tol=1e-6):
    """
    SID by regression in a random linear-Gaussian model on G_true.

    The coefficient of X_i when regressing X_j on X_i and X_pa_est(i) is
    compared with the true total effect T_ij; pairs with j in pa_est(i) are
    predicted to have zero effect.
    """
    _same_dim(G_true, G_est)
    _require_dag(G_true, "true graph")
    _require_dag(G_est, "estimated graph")
    rng = np.random.default_rng(seed)
    d = G_true.dim
    signs = rng.choice([-1.0, 1.0], size=(d, d))
    W = G_true.adjacency * signs * rng.uniform(0.5, 2.0, size=(d, d))
    noise = np.diag(rng.uniform(0.5, 1.5, size=d))
    inv = np.linalg.inv(np.eye(d) - W)
    cov = inv.T @ noise @ inv
    T = total_effects(W)
    wrong = 0
    for i in range(d):
        parents = [int(p) for p in np.flatnonzero(G_est.adjacency[:, i])]
        for j in range(d):
            if j == i:
                continue
            if j in parents:
                predicted = 0.0
            else:
                S = [i] + parents
                beta = np.linalg.solve(cov[np.ix_(S, S)], cov[S, j])
                predicted = beta[0]
            if abs(predicted - T[i, j]) > tol * max(1.0, abs(T[i, j])):
                wrong += 1
    return wrong


def evaluate_graphs(G_true, G_est, W_true=None, W_est=None, timing=0.0):
    fdr, tpr, fpr, shd, nnz = structural_metrics(G_true, G_est)
    scs = None
    if W_true is not None and W_est is not None:
        scs = sign_consistency(W_true, W_est)
    return MetricsReport(
        fdr=fdr, tpr=tpr, fpr=fpr, shd=shd, sid=sid(G_true, G_est), nnz=nnz,
        scs=scs, timing=float(timing),
    )


def evaluate(W_true, W_est, omega=0.3, timing=0.0):
    """Threshold both matrices at omega and compute every metric."""
    t0 = time.perf_counter()
    W_true_star, G_true = threshold(W_true, omega)
    W_est_star, G_est = threshold(W_est, omega)
    report = evaluate_graphs(G_true, G_est, W_true_star, W_est_star, timing)
    logger.debug("evaluated %d-edge estimate in %.3fs: shd=%d sid=%d",
                 report.nnz, time.perf_counter() - t0, report.shd, report.sid)
    return report
