"""
Stage One: acyclicity-only structure learning.

Minimizes F(W) subject to h(W) = 0 with the augmented Lagrangian
    F(W) + rho/2 * h(W)^2 + alpha * h(W)
and L-BFGS-B as the inner solver. The l1 term is made smooth by splitting
W = W+ - W- with both halves bounded below by zero.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as sopt

from objective import ObjectiveConfig, acyclicity_and_grad, as_samples, squared_loss

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Stage1Config:
    h_tol: float = 1e-8
    rho_init: float = 1.0
    rho_max: float = 1e16
    alpha_init: float = 0.0
    progress_ratio: float = 0.25
    max_dual_iters: int = 100
    inner_max_iters: int = 500
    inner_grad_tol: float = 1e-8
    memory: int = 10

    def __post_init__(self):
        if not self.h_tol > 0:
            raise ValueError(f"h_tol must be > 0, got {self.h_tol}")
        if not self.rho_init > 0:
            raise ValueError(f"rho_init must be > 0, got {self.rho_init}")
        if not 0 < self.progress_ratio < 1:
            raise ValueError(f"progress_ratio must be in (0, 1), got {self.progress_ratio}")
        if self.max_dual_iters < 1 or self.inner_max_iters < 1:
            raise ValueError("max_dual_iters and inner_max_iters must be >= 1")


@dataclass
class Stage1Result:
    W: np.ndarray
    h: float
    rho: float
    alpha: float
    converged: bool
    dual_iters: int
    stationarity: float
    h_history: list = field(default_factory=list)

    @property
    def status(self):
        return "converged" if self.converged else "h_tol not reached"


def _bounds(d):
    return [(0, 0) if i == j else (0, None) for _ in range(2) for i in range(d) for j in range(d)]


def _projected_gradient_norm(w, g, bounds):
    pg = np.where(w > 0, g, np.minimum(g, 0.0))
    fixed = np.array([hi == 0 for _, hi in bounds])
    pg[fixed] = 0.0
    return float(np.abs(pg).max()) if pg.size else 0.0


def stage1_fit(X, cfg=Stage1Config(), objcfg=ObjectiveConfig()):
    """Learn W(1) with h(W(1)) <= h_tol; non-convergence is reported, not raised."""
    X = as_samples(X)
    d = X.shape[1]
    lambda1 = objcfg.lambda_
    rho, alpha = cfg.rho_init, cfg.alpha_init

    def _adj(w):
        return (w[:d * d] - w[d * d:]).reshape([d, d])

    def _func(w):
        W = _adj(w)
        value, G_loss = squared_loss(X, W)
        h, G_h = acyclicity_and_grad(W)
        obj = value + 0.5 * rho * h * h + alpha * h + lambda1 * w.sum()
        G_smooth = G_loss + (rho * h + alpha) * G_h
        g_obj = np.concatenate((G_smooth + lambda1, -G_smooth + lambda1), axis=None)
        return obj, g_obj

    bnds = _bounds(d)
    options = {
        "maxiter": cfg.inner_max_iters,
        "maxcor": cfg.memory,
        "gtol": cfg.inner_grad_tol,
    }
    w_est, h = np.zeros(2 * d * d), np.inf
    h_history = []
    it = 0
    for it in range(1, cfg.max_dual_iters + 1):
        w_new, h_new = None, None
        while rho < cfg.rho_max:
            sol = sopt.minimize(_func, w_est, method="L-BFGS-B", jac=True, bounds=bnds, options=options)
            w_new = sol.x
            h_new, _ = acyclicity_and_grad(_adj(w_new))
            if h_new > cfg.progress_ratio * h:
                rho *= 10
                logger.debug("dual iter %d: h=%.3e, raising rho to %.1e", it, h_new, rho)
            else:
                break
        if w_new is None:
            break
        w_est, h = w_new, h_new
        h_history.append(h)
        alpha += rho * h
        logger.debug("dual iter %d: h=%.3e rho=%.1e alpha=%.3e", it, h, rho, alpha)
        if h <= cfg.h_tol or rho >= cfg.rho_max:
            break

    if not np.isfinite(h):
        h, _ = acyclicity_and_grad(_adj(w_est))
    _, g = _func(w_est)
    stationarity = _projected_gradient_norm(w_est, g, bnds)
    converged = bool(h <= cfg.h_tol)
    W = _adj(w_est)
    np.fill_diagonal(W, 0.0)
    if converged:
        logger.info("stage one converged after %d dual iterations (h=%.2e)", it, h)
    else:
        logger.warning("stage one stopped with h=%.2e > h_tol=%.1e (rho=%.1e)", h, cfg.h_tol, rho)
    return Stage1Result(
        W=W,
        h=float(h),
        rho=float(rho),
        alpha=float(alpha),
        converged=converged,
        dual_iters=it,
        stationarity=stationarity,
        h_history=h_history,
    )
