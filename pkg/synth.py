"""
Synthetic linear SEM instances: scale-free DAGs, Gaussian data and
interventional constraints drawn from the true effect matrix.
"""

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np

from errors import CyclicGraphError, InsufficientConstraintsError
from objective import Dataset
from sem_core import CausalGraph, EffectConstraint, total_effects

logger = logging.getLogger(__name__)

NOISE_RANGE = (0.5, 1.5)
SIGNIFICANT_EFFECT = 0.1


@dataclass(frozen=True)
class SynthConfig:
    d: int = 20
    n: int = 100
    edge_min: int = 8
    edge_cap_limit: int = 10
    weight_low: float = 0.5
    weight_high: float = 2.0
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0 < self.weight_low <= self.weight_high:
            raise ValueError(
                f"weight range must satisfy 0 < low <= high, got ({self.weight_low}, {self.weight_high})"
            )
        if self.edge_min < 0:
            raise ValueError(f"edge_min must be >= 0, got {self.edge_min}")

    @property
    def edge_cap(self):
        return min(self.d * (self.d - 1) // 2, self.edge_cap_limit)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    W_true: np.ndarray
    graph: CausalGraph
    T_true: np.ndarray

    @classmethod
    def from_weights(cls, W):
        W = np.asarray(W, dtype=float)
        graph = CausalGraph(W != 0)
        if not nx.is_directed_acyclic_graph(graph.to_networkx()):
            raise CyclicGraphError("ground truth weights must form a DAG")
        return cls(W, graph, total_effects(W))

    @property
    def d(self):
        return self.W_true.shape[0]


def _attachment_parameter(d, target):
    # a BA graph over d nodes with parameter m has m * (d - m) edges
    return min(range(1, d), key=lambda m: (abs(m * (d - m) - target), m))


def gen_scale_free_dag(cfg):
    """Random weighted DAG with edge count uniform in [edge_min, edge_cap]."""
    if cfg.edge_min > cfg.edge_cap:
        raise ValueError(
            f"cannot place {cfg.edge_min} edges in a DAG over {cfg.d} variables "
            f"(at most {cfg.edge_cap})"
        )
    rng = np.random.default_rng(cfg.seed)
    d = cfg.d
    target = int(rng.integers(cfg.edge_min, cfg.edge_cap + 1))
    m = _attachment_parameter(d, target)
    ba = nx.barabasi_albert_graph(d, m, seed=int(rng.integers(2 ** 31 - 1)))

    rank = np.empty(d, dtype=int)
    rank[rng.permutation(d)] = np.arange(d)
    edges = sorted({(u, v) if rank[u] < rank[v] else (v, u) for u, v in ba.edges()})
    if len(edges) > target:
        keep = np.sort(rng.choice(len(edges), size=target, replace=False))
        edges = [edges[k] for k in keep]
    elif len(edges) < target:
        present = set(edges)
        slots = [(u, v) for u in range(d) for v in range(d)
                 if rank[u] < rank[v] and (u, v) not in present]
        extra = rng.choice(len(slots), size=target - len(edges), replace=False)
        edges = sorted(edges + [slots[k] for k in extra])

    W = np.zeros((d, d))
    for u, v in edges:
        W[u, v] = rng.choice([-1.0, 1.0]) * rng.uniform(cfg.weight_low, cfg.weight_high)
    logger.debug("generated DAG d=%d with %d edges (BA m=%d)", d, len(edges), m)
    return GroundTruth.from_weights(W)


def sample_data(gt, n, noise_scale=1.0, seed=0, noise_range=NOISE_RANGE):
    """
    Ancestral sampling X_j = sum_i W[i, j] X_i + z_j with z_j ~ N(0, sigma_j^2).

    sigma_j is drawn once per variable from ``noise_range`` and multiplied by
    ``noise_scale`` (a scalar or one value per variable).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    d = gt.d
    sigma = rng.uniform(*noise_range, size=d) * np.broadcast_to(np.asarray(noise_scale, dtype=float), (d,))
    order = list(nx.topological_sort(gt.graph.to_networkx()))
    X = np.zeros((n, d))
    for j in order:
        X[:, j] = X @ gt.W_true[:, j] + sigma[j] * rng.standard_normal(n)
    return Dataset(X, tuple(f"x{j + 1}" for j in range(d)))


def eligible_pairs(gt, significance=SIGNIFICANT_EFFECT):
    d = gt.d
    return [(i, j) for i in range(d) for j in range(d)
            if i != j and abs(gt.T_true[i, j]) > significance]


def sample_constraints(gt, m, seed=0, delta_init=0.01, significance=SIGNIFICANT_EFFECT):
    """m distinct pairs with |T_ij| > significance, each with delta = sign(T_ij) * delta_init."""
    pairs = eligible_pairs(gt, significance)
    if m > len(pairs):
        raise InsufficientConstraintsError(m, len(pairs))
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pairs), size=m, replace=False)
    constraints = []
    for k in picks:
        i, j = pairs[k]
        constraints.append(EffectConstraint(i, j, float(np.sign(gt.T_true[i, j]) * delta_init)))
    return constraints
