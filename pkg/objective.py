"""
Score function and derivatives for linear causal discovery.

loss:      F(W) = 1/(2n) ||X - XW||_F^2 + lambda * ||W||_1
gradients: hand-coded for F, h, T and R, each checked against
           ``numeric_jacobian`` (central differences) in the tests.
"""

import logging
from dataclasses import dataclass

import numpy as np

from errors import DimensionMismatchError
from sem_core import acyclicity_exponential, effect_inverse

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Dataset:
    """n x d observation matrix, one sample per row, column j = variable j."""

    samples: np.ndarray
    names: tuple = None

    def __post_init__(self):
        X = np.asarray(self.samples, dtype=float)
        if X.ndim != 2:
            raise DimensionMismatchError(f"samples must be a 2-D array, got shape {X.shape}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"dataset needs at least one row and one column, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("dataset has non-finite entries")
        if self.names is not None:
            if len(self.names) != X.shape[1]:
                raise DimensionMismatchError(
                    f"{len(self.names)} column names for {X.shape[1]} columns"
                )
            object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        object.__setattr__(self, "samples", X)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def d(self):
        return self.samples.shape[1]

    def standardized(self):
        """Zero-mean, unit-variance columns (constant columns are only centred)."""
        X = self.samples - self.samples.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        return Dataset(X / std, self.names)


@dataclass(frozen=True)
class ObjectiveConfig:
    lambda_: float = 0.1

    def __post_init__(self):
        if not self.lambda_ >= 0:
            raise ValueError(f"lambda_ must be >= 0, got {self.lambda_}")


def as_samples(X):
    """Accept a Dataset or a raw array and return the float sample matrix."""
    if isinstance(X, Dataset):
        return X.samples
    return Dataset(X).samples


def _check_dims(X, W):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape != (X.shape[1], X.shape[1]):
        raise DimensionMismatchError(
            f"weight matrix shape {W.shape} does not match {X.shape[1]} data columns"
        )
    return W


def squared_loss(X, W):
    """Smooth part of the score and its gradient: (1/2n)||X - XW||^2, (1/n) X^T (XW - X)."""
    X = as_samples(X)
    W = _check_dims(X, W)
    n = X.shape[0]
    R = X @ W - X
    return 0.5 / n * float((R ** 2).sum()), X.T @ R / n


def loss(X, W, cfg=ObjectiveConfig()):
    value, _ = squared_loss(X, W)
    return value + cfg.lambda_ * float(np.abs(W).sum())


def grad_loss(X, W, cfg=ObjectiveConfig()):
    """(1/n) X^T (XW - X) + lambda * sign(W), with sign(0) = 0."""
    _, G = squared_loss(X, W)
    return G + cfg.lambda_ * np.sign(W)


def acyclicity_and_grad(W):
    """h and its gradient on the capped weights of sem_core.acyclicity_exponential."""
    Wc, E = acyclicity_exponential(W)
    return float(np.trace(E) - E.shape[0]), E.T * Wc * 2


def grad_acyclicity(W):
    """Gradient of h(W) = tr(exp(W o W)) - d, i.e. exp(W o W)^T o 2W."""
    return acyclicity_and_grad(W)[1]


def jacobian_total_effects(W):
    """J[i, j, p, q] = dT_ij / dW_pq = A_ip * A_qj with A = (I - W)^-1."""
    A = effect_inverse(W)
    return np.einsum("ip,qj->ijpq", A, A)


def jacobian_reachability(W):
    """
    J[i, j, p, q] = dR_ij / dW_pq for R = M^d, M = I + tanh(W)/d.

    Product rule over the d factors of M:
        dR/dW_pq = sech^2(W_pq)/d * sum_k M^k e_p e_q^T M^(d-1-k)
    """
    W = np.asarray(W, dtype=float)
    d = W.shape[0]
    M = np.eye(d) + np.tanh(W) / d
    powers = [np.eye(d)]
    for _ in range(d - 1):
        powers.append(powers[-1] @ M)
    left = np.stack(powers)
    right = left[::-1]
    J = np.einsum("kip,kqj->ijpq", left, right)
    return J * (sensitivity_factor(W) / d)[None, None, :, :]


def sensitivity_factor(w):
    """sech^2(w) = 1 - tanh^2(w): how strongly R responds to a weight, relative to w = 0."""
    return 1.0 - np.tanh(w) ** 2


def effect_sensitivity(W):
    """max_ij |dT_ij / dW_pq| for every (p, q): how far a weight can move any total effect."""
    return np.abs(jacobian_total_effects(W)).max(axis=(0, 1))


def numeric_jacobian(f, W, step=1e-5):
    """Central-difference Jacobian of f at W; shape f(W).shape + W.shape."""
    W = np.asarray(W, dtype=float)
    base = np.asarray(f(W), dtype=float)
    J = np.zeros(base.shape + W.shape)
    for idx in np.ndindex(*W.shape):
        Wp = W.copy()
        Wm = W.copy()
        Wp[idx] += step
        Wm[idx] -= step
        diff = (np.asarray(f(Wp), dtype=float) - np.asarray(f(Wm), dtype=float)) / (2 * step)
        J[(Ellipsis,) + idx] = diff
    return J
