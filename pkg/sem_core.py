"""
Core quantities of a linear structural equation model.

Conventions used throughout the package: ``W[i, j]`` is the direct effect of
variable ``i`` (row, cause) on variable ``j`` (column, effect), so a sample row
``x`` satisfies ``x = x @ W + z``. The total effect matrix is
``T = (I - W)^-1 - I`` and ``T[i, j]`` is the effect of ``i`` on ``j``.
"""

import logging
import warnings
from dataclasses import dataclass

import networkx as nx
import numpy as np
import scipy.linalg as slin
from scipy.linalg.lapack import get_lapack_funcs

from errors import (
    ConstraintSpecError,
    DimensionMismatchError,
    SingularSystemError,
)

logger = logging.getLogger(__name__)

RCOND_FLOOR = 1e-12
EXP_ROW_LIMIT = 200.0


@dataclass(frozen=True)
class EffectConstraint:
    """delta * (T[cause, target] - delta) > 0; sign(delta) is the effect sign."""

    cause: int
    target: int
    delta: float

    def __post_init__(self):
        if self.cause == self.target:
            raise ConstraintSpecError(
                f"effect constraint needs distinct variables, got {self.cause}->{self.target}"
            )
        if self.delta == 0 or not np.isfinite(self.delta):
            raise ConstraintSpecError(
                f"effect constraint {self.cause}->{self.target} needs a finite nonzero delta"
            )

    def value(self, T):
        return float(self.delta * (T[self.cause, self.target] - self.delta))

    def with_delta(self, delta):
        return EffectConstraint(self.cause, self.target, delta)


@dataclass(frozen=True)
class PathConstraint:
    """R[cause, target] - rho > 0, i.e. a directed path cause ~> target."""

    cause: int
    target: int
    rho: float = 0.0

    def __post_init__(self):
        if self.cause == self.target:
            raise ConstraintSpecError(
                f"path constraint needs distinct variables, got {self.cause}->{self.target}"
            )
        if not self.rho >= 0:
            raise ConstraintSpecError(
                f"path constraint {self.cause}->{self.target} needs rho >= 0, got {self.rho}"
            )

    def with_rho(self, rho):
        return PathConstraint(self.cause, self.target, rho)


@dataclass(frozen=True, eq=False)
class CausalGraph:
    """Binary adjacency of a learned or true graph."""

    adjacency: np.ndarray
    names: tuple = None

    def __post_init__(self):
        adj = np.asarray(self.adjacency).astype(bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DimensionMismatchError(f"adjacency must be square, got shape {adj.shape}")
        if adj.diagonal().any():
            raise ValueError("adjacency must have a zero diagonal (no self loops)")
        if self.names is not None and len(self.names) != adj.shape[0]:
            raise DimensionMismatchError(
                f"{len(self.names)} names for a graph over {adj.shape[0]} variables"
            )
        object.__setattr__(self, "adjacency", adj)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_edges(cls, dim, edges, names=None):
        adj = np.zeros((dim, dim), dtype=bool)
        for i, j in edges:
            adj[i, j] = True
        return cls(adj, names)

    @property
    def dim(self):
        return self.adjacency.shape[0]

    @property
    def nnz(self):
        return int(self.adjacency.sum())

    def edges(self):
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency))]

    def to_networkx(self):
        g = nx.DiGraph()
        g.add_nodes_from(range(self.dim))
        g.add_edges_from(self.edges())
        return g

    def __eq__(self, other):
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency)

    __hash__ = None


def validate_weight_matrix(W):
    """Return W as a float array after checking it is square, finite and zero-diagonal."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionMismatchError(f"weight matrix must be square, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError("weight matrix has non-finite entries")
    if np.any(W.diagonal() != 0):
        raise ValueError("weight matrix must have an exactly zero diagonal")
    return W


def _square(W):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionMismatchError(f"weight matrix must be square, got shape {W.shape}")
    return W


def effect_inverse(W):
    """(I - W)^-1 by LU with partial pivoting; raises SingularSystemError when ill-posed."""
    W = _square(W)
    d = W.shape[0]
    A = np.eye(d) - W
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", slin.LinAlgWarning)
        lu, piv = slin.lu_factor(A)
    gecon, = get_lapack_funcs(("gecon",), (lu,))
    rcond, _ = gecon(lu, np.linalg.norm(A, 1), norm="1")
    if not rcond >= RCOND_FLOOR:
        raise SingularSystemError(float(rcond))
    return slin.lu_solve((lu, piv), np.eye(d))


def total_effects(W):
    """T = (I - W)^-1 - I: direct plus all indirect effects of row i on column j."""
    inv = effect_inverse(W)
    return inv - np.eye(inv.shape[0])


def acyclicity_exponential(W):
    """
    Return (Wc, exp(Wc o Wc)) where Wc is W with |w| capped at sqrt(EXP_ROW_LIMIT / d).

    Every row of Wc o Wc sums to at most EXP_ROW_LIMIT, so the exponential is
    finite for any W. Capping keeps the support, so h is still zero exactly on
    acyclic supports, and Wc == W whenever no entry exceeds the cap.
    """
    W = _square(W)
    cap = np.sqrt(EXP_ROW_LIMIT / max(W.shape[0], 1))
    Wc = np.clip(W, -cap, cap)
    return Wc, slin.expm(Wc * Wc)


def acyclicity(W):
    """h(W) = tr(exp(W o W)) - d; zero exactly when the support of W is acyclic."""
    _, E = acyclicity_exponential(W)
    return float(np.trace(E) - E.shape[0])


def reachability(W):
    """R = (I + tanh(W)/d)^d."""
    W = _square(W)
    d = W.shape[0]
    M = np.eye(d) + np.tanh(W) / d
    return np.linalg.matrix_power(M, d)


def threshold(W, omega):
    """Zero every entry with |w| <= omega; return the pruned matrix and its graph."""
    if omega < 0:
        raise ValueError(f"omega must be >= 0, got {omega}")
    W = _square(W)
    W_thr = np.where(np.abs(W) > omega, W, 0.0)
    np.fill_diagonal(W_thr, 0.0)
    return W_thr, CausalGraph(W_thr != 0)


def is_dag(G):
    return nx.is_directed_acyclic_graph(G.to_networkx())


def has_directed_path(G, cause, target):
    return nx.has_path(G.to_networkx(), cause, target)


def check_constraints(W_star, constraints):
    """Evaluate delta * (T_ij - delta) > 0 for each constraint on total_effects(W_star)."""
    constraints = list(constraints)
    if not constraints:
        return []
    T = total_effects(W_star)
    return [c.value(T) > 0 for c in constraints]
