"""
Path-constraint baseline: the two-stage driver of lin_cdic with reachability
constraints R_ij(W) - rho_ij > 0, R = (I + tanh(W)/d)^d.

After thresholding, a path constraint counts as met when the graph has a
directed path cause ~> target; R itself can be negative on a real path when
weights are negative, so it is not used for the check.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from errors import ConstraintSpecError
from lin_cdic import FEAS_EPS, _validate_driver_config, fit_with_constraints
from objective import ObjectiveConfig, jacobian_reachability, sensitivity_factor
from sem_core import PathConstraint, has_directed_path, reachability
from sqp_solver import SqpConfig
from stage_one import Stage1Config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathConfig:
    omega: float = 0.3
    epsilon: float = 0.01
    rho_init: float = 0.0
    h_tol: float = 1e-8
    h_tol_floor: float = 1e-14
    h_tol_shrink: float = 0.25
    max_escalations: int = 40
    kkt_tol: float = 1e-3
    sqp: SqpConfig = field(default_factory=SqpConfig)
    stage1: Stage1Config = field(default_factory=Stage1Config)

    def __post_init__(self):
        _validate_driver_config(self)
        if not self.rho_init >= 0:
            raise ValueError(f"rho_init must be >= 0, got {self.rho_init}")


class PathFamily:
    kind = "path"

    def parameter(self, c):
        return c.rho

    def escalate(self, c, epsilon, W_est=None):
        """rho + epsilon, lifted to R_ij(W_est) + epsilon so the next solve must raise R_ij."""
        rho = c.rho + epsilon
        if W_est is not None:
            rho = max(rho, float(reachability(W_est)[c.cause, c.target]) + epsilon)
        return c.with_rho(rho)

    def values_and_jacobian(self, W, constraints):
        R = reachability(W)
        J = jacobian_reachability(W)
        d2 = W.size
        g = np.array([R[c.cause, c.target] - c.rho - FEAS_EPS for c in constraints])
        G = np.array([J[c.cause, c.target].reshape(d2) for c in constraints])
        return g, G

    def satisfied(self, W_star, graph, c):
        return has_directed_path(graph, c.cause, c.target)

    def log_escalation(self, c, W_est):
        logger.debug("path %d->%d escalated to rho=%.3f (direct weight sensitivity %.3f)",
                     c.cause, c.target, c.rho,
                     float(sensitivity_factor(W_est[c.cause, c.target])))


def path_constraints_from_effects(effect_constraints, rho_init=0.0):
    """One path constraint per effect constraint; the effect's sign is dropped."""
    seen = {}
    for c in effect_constraints:
        seen.setdefault((c.cause, c.target), PathConstraint(c.cause, c.target, rho_init))
    return list(seen.values())


def lin_cd_path_fit(X, constraints, cfg=PathConfig(), objcfg=ObjectiveConfig(), trace=None):
    constraints = list(constraints)
    for c in constraints:
        if not isinstance(c, PathConstraint):
            raise ConstraintSpecError(f"expected PathConstraint, got {type(c).__name__}")
    if cfg.rho_init:
        constraints = [c.with_rho(max(c.rho, cfg.rho_init)) for c in constraints]
    return fit_with_constraints(X, constraints, PathFamily(), cfg, objcfg, "cd-path", trace)
