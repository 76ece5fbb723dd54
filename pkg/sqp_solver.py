"""
Nonlinearly constrained solver for the refinement stage.

Problems are stated over flattened variables with equality constraints
c(x) = 0, inequality constraints g(x) >= 0 and per-variable bounds. The smooth
part of the objective comes from callbacks; an optional l1 weight adds
lambda * ||x||_1 with sign(0) = 0 as its subgradient.

The SQP iteration itself is SciPy's SLSQP (damped BFGS on the Lagrangian,
least-squares QP subproblem with bounds, l1 merit line search). Fixed
variables (lo == hi) are removed before the call and restored afterwards, and
a positive l1 weight is handled by splitting x = p - q with p, q >= 0 so the
problem SLSQP sees is smooth.

Iteration stops once ||x_k+1 - x_k|| < tol at a feasible iterate. A solve only
counts as converged when the final point also passes the KKT check: residual
at most kkt_tol and constraint violation at most feas_tol. Otherwise SLSQP is
restarted from where it stopped, which resets its Hessian estimate, up to
max_restarts times.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.optimize as sopt

logger = logging.getLogger(__name__)

ACTIVE_TOL = 1e-6
ZERO_TOL = 1e-4

ITERATION_LIMIT = 9
NOT_STATIONARY = 10

_EXIT_MODES = {
    0: "converged",
    4: "subproblem infeasible",
    8: "line search failed",
    ITERATION_LIMIT: "iteration limit reached",
    NOT_STATIONARY: "stopped away from a KKT point",
}


@dataclass
class NlpProblem:
    """min f(x) + l1_weight * ||x||_1  s.t.  eq_fun(x) = 0, ineq_fun(x) >= 0, lo <= x <= hi."""

    n_vars: int
    objective: Callable
    gradient: Callable
    bounds: list
    eq_fun: Optional[Callable] = None
    eq_jac: Optional[Callable] = None
    ineq_fun: Optional[Callable] = None
    ineq_jac: Optional[Callable] = None
    l1_weight: float = 0.0
    shape: tuple = None

    def __post_init__(self):
        if len(self.bounds) != self.n_vars:
            raise ValueError(f"{len(self.bounds)} bounds for {self.n_vars} variables")
        norm = []
        for lo, hi in self.bounds:
            lo = -np.inf if lo is None else float(lo)
            hi = np.inf if hi is None else float(hi)
            if lo > hi:
                raise ValueError(f"bound ({lo}, {hi}) has lo > hi")
            norm.append((lo, hi))
        self.bounds = norm
        if (self.eq_fun is None) != (self.eq_jac is None):
            raise ValueError("eq_fun and eq_jac must be given together")
        if (self.ineq_fun is None) != (self.ineq_jac is None):
            raise ValueError("ineq_fun and ineq_jac must be given together")
        if self.l1_weight < 0:
            raise ValueError(f"l1_weight must be >= 0, got {self.l1_weight}")
        if self.shape is not None and int(np.prod(self.shape)) != self.n_vars:
            raise ValueError(f"shape {self.shape} does not hold {self.n_vars} variables")

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self):
        return np.array([hi for _, hi in self.bounds])

    def total_objective(self, x):
        return float(self.objective(x)) + self.l1_weight * float(np.abs(x).sum())

    def total_gradient(self, x):
        return np.asarray(self.gradient(x), dtype=float) + self.l1_weight * np.sign(x)

    def eq_values(self, x):
        if self.eq_fun is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.eq_fun(x), dtype=float))

    def ineq_values(self, x):
        if self.ineq_fun is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.ineq_fun(x), dtype=float))

    def eq_jacobian(self, x):
        if self.eq_jac is None:
            return np.zeros((0, self.n_vars))
        return np.atleast_2d(np.asarray(self.eq_jac(x), dtype=float))

    def ineq_jacobian(self, x):
        if self.ineq_jac is None:
            return np.zeros((0, self.n_vars))
        return np.atleast_2d(np.asarray(self.ineq_jac(x), dtype=float))

    def max_violation(self, x):
        c = self.eq_values(x)
        g = self.ineq_values(x)
        worst = 0.0
        if c.size:
            worst = max(worst, float(np.abs(c).max()))
        if g.size:
            worst = max(worst, float(-g.min()))
        return worst


@dataclass(frozen=True)
class SqpConfig:
    max_iter: int = 10000
    tol: float = 1e-6
    kkt_tol: float = 1e-4
    feas_tol: float = 1e-6
    max_restarts: int = 5

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        for name in ("tol", "kkt_tol", "feas_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.max_restarts < 0:
            raise ValueError(f"max_restarts must be >= 0, got {self.max_restarts}")


@dataclass
class SolveStatus:
    converged: bool
    code: int
    message: str
    iterations: int
    objective: float
    max_violation: float
    kkt: float


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    max_violation: float
    step_norm: float


class _StepConverged(Exception):
    def __init__(self, z):
        super().__init__("step below tolerance")
        self.z = z


class _Reduced:
    """The free variables of a problem as SLSQP sees them: x_free, or (p, q) with x_free = p - q."""

    def __init__(self, problem, x0):
        self.problem = problem
        lo, hi = problem.lower, problem.upper
        self.free = lo < hi
        self.m = int(self.free.sum())
        self.x_fixed = x0.copy()
        self.split = problem.l1_weight > 0
        flo, fhi = lo[self.free], hi[self.free]
        if self.split:
            self.lower = np.concatenate([np.maximum(flo, 0.0), np.maximum(-fhi, 0.0)])
            self.upper = np.concatenate([np.maximum(fhi, 0.0), np.maximum(-flo, 0.0)])
        else:
            self.lower, self.upper = flo, fhi

    def start(self, x):
        xf = x[self.free]
        if self.split:
            return np.concatenate([np.maximum(xf, 0.0), np.maximum(-xf, 0.0)])
        return xf.copy()

    def expand(self, z):
        x = self.x_fixed.copy()
        x[self.free] = z[:self.m] - z[self.m:] if self.split else z
        return x

    def lift(self, G):
        return np.concatenate([G, -G], axis=-1) if self.split else G

    def fun(self, z):
        value = float(self.problem.objective(self.expand(z)))
        if self.split:
            value += self.problem.l1_weight * float(z.sum())
        return value

    def jac(self, z):
        g = np.asarray(self.problem.gradient(self.expand(z)), dtype=float)[self.free]
        if self.split:
            return self.lift(g) + self.problem.l1_weight
        return g

    def constraints(self):
        problem = self.problem
        out = []
        if problem.eq_fun is not None:
            out.append({
                "type": "eq",
                "fun": lambda z: problem.eq_values(self.expand(z)),
                "jac": lambda z: self.lift(problem.eq_jacobian(self.expand(z))[:, self.free]),
            })
        if problem.ineq_fun is not None:
            out.append({
                "type": "ineq",
                "fun": lambda z: problem.ineq_values(self.expand(z)),
                "jac": lambda z: self.lift(problem.ineq_jacobian(self.expand(z))[:, self.free]),
            })
        return out

    def bounds(self):
        return [(None if np.isinf(a) else a, None if np.isinf(b) else b)
                for a, b in zip(self.lower, self.upper)]


def _slsqp_pass(red, z0, cfg, max_iter, state, trace):
    """One SLSQP run; returns (z, exit code)."""
    problem = red.problem

    def _callback(zk):
        state["iteration"] += 1
        x = red.expand(zk)
        step = float(np.linalg.norm(x - state["previous"]))
        state["previous"] = x
        violation = problem.max_violation(x)
        if trace is not None:
            trace(TraceRecord(
                iteration=state["iteration"],
                objective=problem.total_objective(x),
                max_violation=violation,
                step_norm=step,
            ))
        if step < cfg.tol and violation <= cfg.feas_tol:
            raise _StepConverged(np.array(zk, copy=True))

    try:
        sol = sopt.minimize(
            red.fun,
            z0,
            jac=red.jac,
            method="SLSQP",
            bounds=red.bounds(),
            constraints=red.constraints(),
            callback=_callback,
            options={"maxiter": max_iter, "ftol": cfg.tol ** 2},
        )
    except _StepConverged as stop:
        return stop.z, 0
    return np.clip(sol.x, red.lower, red.upper), int(sol.status)


def assess(problem, x, cfg=SqpConfig(), code=0, iterations=0):
    """
    SolveStatus of the point x.

    x is converged only when kkt_residual <= cfg.kkt_tol and the worst
    constraint violation <= cfg.feas_tol; a solver exit code of 0 at any
    other point becomes NOT_STATIONARY.
    """
    x = np.asarray(x, dtype=float).ravel()
    kkt = kkt_residual(x, problem)
    violation = problem.max_violation(x)
    converged = bool(kkt <= cfg.kkt_tol and violation <= cfg.feas_tol)
    if converged:
        code = 0
    elif code == 0:
        code = NOT_STATIONARY
    return SolveStatus(
        converged=converged,
        code=code,
        message=_EXIT_MODES.get(code, f"solver exit {code}"),
        iterations=iterations,
        objective=problem.total_objective(x),
        max_violation=violation,
        kkt=kkt,
    )


def sqp_solve(problem, W_init, cfg=SqpConfig(), trace=None):
    """
    Solve ``problem`` from ``W_init``; returns (W, SolveStatus).

    ``trace`` is an optional callable receiving a TraceRecord per iteration.
    The returned W has ``problem.shape`` when the problem declares one.
    """
    x0 = np.asarray(W_init, dtype=float).ravel().copy()
    if x0.size != problem.n_vars:
        raise ValueError(f"initial point has {x0.size} entries, problem has {problem.n_vars}")
    if np.any(x0 < problem.lower) or np.any(x0 > problem.upper):
        raise ValueError("initial point violates the variable bounds")

    red = _Reduced(problem, x0)
    if red.m == 0:
        return _shaped(x0, problem), assess(problem, x0, cfg)

    state = {"iteration": 0, "previous": x0.copy()}
    z = red.start(x0)
    status = None
    for attempt in range(cfg.max_restarts + 1):
        remaining = cfg.max_iter - state["iteration"]
        if remaining < 1:
            break
        z_prev = z
        z, code = _slsqp_pass(red, z, cfg, remaining, state, trace)
        if code == 0 and state["iteration"] >= cfg.max_iter:
            code = ITERATION_LIMIT
        status = assess(problem, red.expand(z), cfg, code, state["iteration"])
        if status.converged or status.code == ITERATION_LIMIT or np.array_equal(z, z_prev):
            break
        logger.debug("SLSQP restart %d after %s (kkt %.2e, violation %.2e)",
                     attempt + 1, status.message, status.kkt, status.max_violation)

    x = red.expand(z)
    if status is None:
        status = assess(problem, x, cfg, ITERATION_LIMIT, state["iteration"])
    elif not status.converged and state["iteration"] >= cfg.max_iter:
        status.code = ITERATION_LIMIT
        status.message = _EXIT_MODES[ITERATION_LIMIT]
    if status.converged:
        logger.debug("SLSQP converged in %d iterations (violation %.2e, kkt %.2e)",
                     status.iterations, status.max_violation, status.kkt)
    else:
        logger.info("SLSQP stopped: %s after %d iterations (kkt %.2e)",
                    status.message, status.iterations, status.kkt)
    return _shaped(x, problem), status


def _shaped(x, problem):
    return x.reshape(problem.shape) if problem.shape is not None else x


def kkt_residual(W, problem, active_tol=ACTIVE_TOL, zero_tol=ZERO_TOL):
    """
    Stationarity residual with least-squares multipliers.

    Fits grad f = Jc^T mu + Jg_A^T lam + nu_lo - nu_hi - l1 * s over the free
    variables, with lam, nu >= 0 on active inequalities and bounds and
    s in [-1, 1] on coordinates within ``zero_tol`` of zero. Returns the
    infinity norm of what the multipliers cannot explain. Columns are scaled
    to unit norm before the fit, so a nearly flat constraint gradient can
    still carry a large multiplier.
    """
    x = np.asarray(W, dtype=float).ravel()
    lo, hi = problem.lower, problem.upper
    free = lo < hi
    if not free.any():
        return 0.0

    g = np.asarray(problem.gradient(x), dtype=float)
    near_zero = np.abs(x) <= zero_tol
    b = g + problem.l1_weight * np.sign(x) * ~near_zero

    columns, col_lo, col_hi = [], [], []
    Jc = problem.eq_jacobian(x)
    for row in Jc:
        columns.append(row)
        col_lo.append(-np.inf)
        col_hi.append(np.inf)
    gv = problem.ineq_values(x)
    Jg = problem.ineq_jacobian(x)
    for k in np.flatnonzero(gv <= active_tol):
        columns.append(Jg[k])
        col_lo.append(0.0)
        col_hi.append(np.inf)
    n = problem.n_vars
    for i in np.flatnonzero(free & (x - lo <= active_tol)):
        columns.append(np.eye(1, n, i).ravel())
        col_lo.append(0.0)
        col_hi.append(np.inf)
    for i in np.flatnonzero(free & (hi - x <= active_tol)):
        columns.append(-np.eye(1, n, i).ravel())
        col_lo.append(0.0)
        col_hi.append(np.inf)
    if problem.l1_weight > 0:
        for i in np.flatnonzero(free & near_zero):
            columns.append(np.eye(1, n, i).ravel())
            col_lo.append(-problem.l1_weight)
            col_hi.append(problem.l1_weight)

    target = b[free]
    if not columns:
        return float(np.abs(target).max())
    A = np.array(columns).T[free]
    norms = np.linalg.norm(A, axis=0)
    keep = norms > 0
    if not keep.any():
        return float(np.abs(target).max())
    A = A[:, keep] / norms[keep]
    lower = np.array(col_lo)[keep] * norms[keep]
    upper = np.array(col_hi)[keep] * norms[keep]
    fit = sopt.lsq_linear(A, target, bounds=(lower, upper), method="bvls")
    return float(np.abs(A @ fit.x - target).max())
