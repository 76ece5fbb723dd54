"""
Two-stage causal discovery with interventional constraints.

Stage One learns an acyclic warm start W(1). Constraints are then added one at
a time; after each SLSQP re-solve the estimate is thresholded and checked:

  - not a DAG           -> h_tol *= 0.25 and re-solve
  - a constraint broken -> escalate its threshold by epsilon and re-solve
  - otherwise           -> W(1) <- W_est and add the next constraint

The same driver runs path constraints (see lin_cd_path); the constraint
family decides how constraints enter the solver, how they are checked on the
thresholded graph and how they escalate.
"""

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from errors import ConstraintSpecError, DimensionMismatchError, SingularSystemError
from objective import (
    ObjectiveConfig,
    acyclicity_and_grad,
    as_samples,
    effect_sensitivity,
    jacobian_total_effects,
    squared_loss,
)
from sem_core import (
    EffectConstraint,
    acyclicity,
    is_dag,
    threshold,
    total_effects,
)
from sqp_solver import NlpProblem, SqpConfig, assess, kkt_residual, sqp_solve
from stage_one import Stage1Config, stage1_fit

logger = logging.getLogger(__name__)

FEAS_EPS = 1e-8

STATUS_SUCCESS = "success"
STATUS_UNSATISFIABLE = "constraint unsatisfiable at omega"
STATUS_CYCLIC = "acyclicity not reached"
STATUS_NOT_STATIONARY = "solver did not reach a KKT point"

__all__ = [
    "CdicConfig",
    "ConstraintOutcome",
    "RunReport",
    "build_effect_problem",
    "kkt_residual",
    "lin_cdic_fit",
    "notears_fit",
]


@dataclass(frozen=True)
class CdicConfig:
    omega: float = 0.3
    epsilon: float = 0.25
    delta_init: float = 0.01
    h_tol: float = 1e-8
    h_tol_floor: float = 1e-14
    h_tol_shrink: float = 0.25
    max_escalations: int = 40
    kkt_tol: float = 1e-3
    sqp: SqpConfig = field(default_factory=SqpConfig)
    stage1: Stage1Config = field(default_factory=Stage1Config)

    def __post_init__(self):
        _validate_driver_config(self)
        if not self.delta_init > 0:
            raise ValueError(f"delta_init must be > 0, got {self.delta_init}")


def _validate_driver_config(cfg):
    if not cfg.omega >= 0:
        raise ValueError(f"omega must be >= 0, got {cfg.omega}")
    if not cfg.epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {cfg.epsilon}")
    if not cfg.h_tol > 0:
        raise ValueError(f"h_tol must be > 0, got {cfg.h_tol}")
    if not 0 < cfg.h_tol_shrink < 1:
        raise ValueError(f"h_tol_shrink must be in (0, 1), got {cfg.h_tol_shrink}")
    if cfg.max_escalations < 0:
        raise ValueError(f"max_escalations must be >= 0, got {cfg.max_escalations}")
    if not cfg.kkt_tol > 0:
        raise ValueError(f"kkt_tol must be > 0, got {cfg.kkt_tol}")


@dataclass
class ConstraintOutcome:
    cause: int
    target: int
    kind: str
    initial: float
    final: float
    satisfied: bool
    escalations: int


@dataclass
class RunReport:
    method: str
    W_est: np.ndarray
    W_star: np.ndarray
    graph: object
    T: np.ndarray
    constraints: list
    status: str
    h: float
    kkt: float
    wall_time: float
    config: dict
    stage1_converged: bool = True
    n_solves: int = 0
    metrics: dict = None

    @property
    def success(self):
        return self.status == STATUS_SUCCESS

    @property
    def constraint_flags(self):
        return [c.satisfied for c in self.constraints]

    @property
    def escalation_counts(self):
        return [c.escalations for c in self.constraints]

    @property
    def order(self):
        return [(c.cause, c.target) for c in self.constraints]


class EffectFamily:
    """Total-effect constraints delta * (T_ij - delta) > 0."""

    kind = "effect"

    def parameter(self, c):
        return c.delta

    def escalate(self, c, epsilon, W_est=None):
        return c.with_delta(c.delta + epsilon * np.sign(c.delta))

    def values_and_jacobian(self, W, constraints):
        T = total_effects(W)
        J = jacobian_total_effects(W)
        d2 = W.size
        g = np.array([c.value(T) - FEAS_EPS for c in constraints])
        G = np.array([c.delta * J[c.cause, c.target].reshape(d2) for c in constraints])
        return g, G

    def satisfied(self, W_star, graph, c):
        return c.value(total_effects(W_star)) > 0

    def log_escalation(self, c, W_est):
        if logger.isEnabledFor(logging.DEBUG):
            try:
                peak = float(effect_sensitivity(W_est).max())
            except SingularSystemError:
                return
            logger.debug("effect %d->%d escalated to delta=%.3f (peak |dT/dW| %.3f)",
                         c.cause, c.target, c.delta, peak)


def _weight_bounds(d):
    return [(0.0, 0.0) if i == j else (None, None) for i in range(d) for j in range(d)]


def build_problem(X, constraints, family, h_tol, objcfg=ObjectiveConfig(), penalty=None):
    """
    SQP problem: min F(W) s.t. h_tol - h(W) >= 0 and the family's constraints >= 0.

    With ``penalty=(rho, alpha)`` acyclicity leaves the constraints and enters
    the objective as rho/2 * h(W)^2 + alpha * h(W), as in Stage One.
    """
    X = as_samples(X)
    d = X.shape[1]
    constraints = list(constraints)

    def _objective(x):
        W = x.reshape(d, d)
        value = squared_loss(X, W)[0]
        if penalty is not None:
            rho, alpha = penalty
            h, _ = acyclicity_and_grad(W)
            value += 0.5 * rho * h * h + alpha * h
        return value

    def _gradient(x):
        W = x.reshape(d, d)
        G = squared_loss(X, W)[1]
        if penalty is not None:
            rho, alpha = penalty
            h, G_h = acyclicity_and_grad(W)
            G = G + (rho * h + alpha) * G_h
        return G.ravel()

    def _ineq(x):
        W = x.reshape(d, d)
        rows = []
        if penalty is None:
            h, _ = acyclicity_and_grad(W)
            rows.append(np.array([h_tol - h]))
        if constraints:
            rows.append(family.values_and_jacobian(W, constraints)[0])
        return np.concatenate(rows)

    def _ineq_jac(x):
        W = x.reshape(d, d)
        rows = []
        if penalty is None:
            _, G_h = acyclicity_and_grad(W)
            rows.append(-G_h.reshape(1, d * d))
        if constraints:
            rows.append(family.values_and_jacobian(W, constraints)[1])
        return np.vstack(rows)

    has_ineq = penalty is None or bool(constraints)
    return NlpProblem(
        n_vars=d * d,
        objective=_objective,
        gradient=_gradient,
        bounds=_weight_bounds(d),
        ineq_fun=_ineq if has_ineq else None,
        ineq_jac=_ineq_jac if has_ineq else None,
        l1_weight=objcfg.lambda_,
        shape=(d, d),
    )


def build_effect_problem(X, constraints, h_tol, objcfg=ObjectiveConfig()):
    return build_problem(X, constraints, EffectFamily(), h_tol, objcfg)


def _check_pairs(constraints, d):
    seen = set()
    for c in constraints:
        if not (0 <= c.cause < d and 0 <= c.target < d):
            raise DimensionMismatchError(
                f"constraint {c.cause}->{c.target} is outside a model over {d} variables"
            )
        if (c.cause, c.target) in seen:
            raise ConstraintSpecError(f"duplicate constraint on pair {c.cause}->{c.target}")
        seen.add((c.cause, c.target))


def _config_echo(cfg, objcfg):
    echo = dataclasses.asdict(cfg)
    echo["lambda"] = objcfg.lambda_
    return echo


def _effects_or_nan(W):
    try:
        return total_effects(W)
    except SingularSystemError:
        return np.full(W.shape, np.nan)


def _finish(method, family, constraints, current, counts, W_est, status, kkt,
            t0, cfg, objcfg, stage1_converged, n_solves):
    W_star, graph = threshold(W_est, cfg.omega)
    outcomes = []
    for k, c in enumerate(constraints):
        try:
            ok = bool(family.satisfied(W_star, graph, c))
        except SingularSystemError:
            ok = False
        final = current[k] if k < len(current) else c
        outcomes.append(ConstraintOutcome(
            cause=c.cause,
            target=c.target,
            kind=family.kind,
            initial=float(family.parameter(c)),
            final=float(family.parameter(final)),
            satisfied=ok,
            escalations=counts[k] if k < len(counts) else 0,
        ))
    return RunReport(
        method=method,
        W_est=W_est,
        W_star=W_star,
        graph=graph,
        T=_effects_or_nan(W_star),
        constraints=outcomes,
        status=status,
        h=acyclicity(W_est),
        kkt=float(kkt),
        wall_time=time.perf_counter() - t0,
        config=_config_echo(cfg, objcfg),
        stage1_converged=stage1_converged,
        n_solves=n_solves,
    )


def _penalty_refine(X, current, family, h_tol, W_start, cfg, objcfg, trace, duals):
    """
    Re-solve with acyclicity as an augmented-Lagrangian penalty.

    Continues Stage One's schedule from ``duals`` = (rho, alpha): rho grows
    tenfold while h stalls, alpha += rho * h after each accepted solve.
    Returns (W, (rho, alpha)).
    """
    s1 = cfg.stage1
    rho, alpha = duals
    W, h = W_start, acyclicity(W_start)
    for _ in range(s1.max_dual_iters):
        while True:
            problem = build_problem(X, current, family, h_tol, objcfg, penalty=(rho, alpha))
            W_new, _ = sqp_solve(problem, W, cfg.sqp, trace)
            h_new = acyclicity(W_new)
            if h_new > s1.progress_ratio * h and h_new > h_tol and rho < s1.rho_max:
                rho *= 10
                logger.debug("penalty refine: h=%.3e, raising rho to %.1e", h_new, rho)
            else:
                break
        W, h = W_new, h_new
        alpha += rho * h
        if h <= h_tol or rho >= s1.rho_max:
            break
    return W, (rho, alpha)


def _refine(X, current, family, h_tol, W1, cfg, objcfg, trace, duals):
    """
    One constrained re-solve from W1; returns (W_est, SolveStatus, duals).

    The direct SQP solve keeps h_tol - h(W) >= 0 as a constraint, whose
    gradient vanishes on acyclic supports. When that solve stops away from a
    KKT point the penalty form takes over, and its result is checked against
    the direct problem with ``cfg.kkt_tol``.
    """
    problem = build_problem(X, current, family, h_tol, objcfg)
    W_est, solve = sqp_solve(problem, W1, cfg.sqp, trace)
    if solve.converged:
        return W_est, solve, duals
    logger.info("direct solve %s (kkt %.2e); switching to the acyclicity penalty",
                solve.message, solve.kkt)
    W_est, duals = _penalty_refine(X, current, family, h_tol, W1, cfg, objcfg, trace, duals)
    gate = dataclasses.replace(cfg.sqp, kkt_tol=cfg.kkt_tol)
    return W_est, assess(problem, W_est, gate, iterations=solve.iterations), duals


def fit_with_constraints(X, constraints, family, cfg, objcfg=ObjectiveConfig(),
                         method="cdic", trace=None):
    """Run the two-stage driver for any constraint family; returns a RunReport."""
    t0 = time.perf_counter()
    X = as_samples(X)
    d = X.shape[1]
    constraints = list(constraints)
    _check_pairs(constraints, d)

    stage1 = stage1_fit(X, dataclasses.replace(cfg.stage1, h_tol=cfg.h_tol), objcfg)
    W1 = stage1.W
    W_est = W1
    h_tol = cfg.h_tol
    kkt = stage1.stationarity
    duals = (stage1.rho, stage1.alpha)
    status = STATUS_SUCCESS
    current, counts = [], []
    n_solves = 0

    for k, c in enumerate(constraints):
        logger.info("adding %s constraint %d/%d: %d->%d", family.kind, k + 1,
                    len(constraints), c.cause, c.target)
        current.append(c)
        counts.append(0)
        while True:
            W_est, solve, duals = _refine(X, current, family, h_tol, W1, cfg, objcfg,
                                          trace, duals)
            n_solves += 1
            kkt = solve.kkt
            if not solve.converged:
                status = STATUS_NOT_STATIONARY
                logger.warning("refinement stopped with kkt=%.2e, violation=%.2e",
                               solve.kkt, solve.max_violation)
                break
            W_star, graph = threshold(W_est, cfg.omega)
            if not is_dag(graph):
                if h_tol <= cfg.h_tol_floor:
                    status = STATUS_CYCLIC
                    logger.warning("thresholded graph still cyclic at h_tol=%.1e", h_tol)
                    break
                h_tol = max(h_tol * cfg.h_tol_shrink, cfg.h_tol_floor)
                logger.info("thresholded graph is cyclic; h_tol -> %.2e", h_tol)
                continue
            violated = [q for q in range(len(current))
                        if not family.satisfied(W_star, graph, constraints[q])]
            if not violated:
                W1 = W_est
                break
            if any(counts[q] >= cfg.max_escalations for q in violated):
                status = STATUS_UNSATISFIABLE
                logger.warning("escalation cap %d reached; stopping with the last iterate",
                               cfg.max_escalations)
                break
            for q in violated:
                current[q] = family.escalate(current[q], cfg.epsilon, W_est)
                counts[q] += 1
                logger.info("%s %d->%d violated after thresholding; threshold now %.3f",
                            family.kind, current[q].cause, current[q].target,
                            family.parameter(current[q]))
                family.log_escalation(current[q], W_est)
        if status != STATUS_SUCCESS:
            break

    report = _finish(method, family, constraints, current, counts, W_est, status, kkt,
                     t0, cfg, objcfg, stage1.converged, n_solves)
    if report.status == STATUS_SUCCESS and not is_dag(report.graph):
        report.status = STATUS_CYCLIC
    logger.info("%s finished: %s, %d edges, %d solves, %.2fs", method, report.status,
                report.graph.nnz, n_solves, report.wall_time)
    return report


def lin_cdic_fit(X, constraints, cfg=CdicConfig(), objcfg=ObjectiveConfig(), trace=None):
    for c in constraints:
        if not isinstance(c, EffectConstraint):
            raise ConstraintSpecError(f"expected EffectConstraint, got {type(c).__name__}")
    return fit_with_constraints(X, constraints, EffectFamily(), cfg, objcfg, "cdic", trace)


def notears_fit(X, constraints=(), cfg=CdicConfig(), objcfg=ObjectiveConfig()):
    """Stage One plus thresholding; constraints are only evaluated, never enforced."""
    t0 = time.perf_counter()
    X = as_samples(X)
    constraints = list(constraints)
    _check_pairs(constraints, X.shape[1])
    stage1 = stage1_fit(X, dataclasses.replace(cfg.stage1, h_tol=cfg.h_tol), objcfg)
    report = _finish("notears", EffectFamily(), constraints, [], [], stage1.W, STATUS_SUCCESS,
                     stage1.stationarity, t0, cfg, objcfg, stage1.converged, 0)
    if not is_dag(report.graph):
        report.status = STATUS_CYCLIC
    return report
