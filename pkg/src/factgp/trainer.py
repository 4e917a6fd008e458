"""Hyperparameter learning by gradient descent on the NLML.

Plain steepest descent with Armijo backtracking. Few enough parameters
(a handful of log-hyperparameters, or m*D inducing coordinates) that a
quasi-Newton method buys little.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import OptimizationDivergedError
from .kernel import HyperParams


@dataclass(frozen=True)
class OptimizeConfig:
    max_iters: int = 200
    grad_tol: float = 1e-6
    step_tol: float = 1e-10
    use_finite_diff: bool = False
    fd_step: float = 1e-5
    armijo: float = 1e-4
    max_backtracks: int = 60

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if min(self.grad_tol, self.step_tol, self.fd_step) <= 0:
            raise ValueError("tolerances and fd_step must be positive")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    objective: float
    grad_norm: float
    step: float


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    trace: list = field(default_factory=list)
    reason: str = ""

    @property
    def theta(self):
        return HyperParams.from_vector(self.x)


def finite_diff_grad(objective, theta, fd_step=1e-5):
    """Central differences, one coordinate at a time."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = fd_step
        g[i] = (objective(theta + e) - objective(theta - e)) / (2.0 * fd_step)
    return g


def gradient_descent(fun, x0, grad=None, cfg=None, project=None):
    """Minimize `fun` from `x0`; the objective trace never increases.

    `project` (optional) maps a trial point back into the feasible set
    before it is evaluated.
    """
    cfg = cfg or OptimizeConfig()
    if grad is None:
        def grad(x):
            return finite_diff_grad(fun, x, cfg.fd_step)
    x = np.array(x0, dtype=float)
    if project is not None:
        x = project(x)
    f = float(fun(x))
    trace = []
    if not np.isfinite(f):
        raise OptimizationDivergedError("objective is not finite at the starting point", trace)

    t = None
    reason = "max_iters"
    for it in range(cfg.max_iters):
        g = np.asarray(grad(x), dtype=float)
        gnorm = float(np.linalg.norm(g))
        trace.append(TraceRow(it, f, gnorm, 0.0 if t is None else t))
        if not np.isfinite(gnorm):
            raise OptimizationDivergedError("gradient is not finite", trace)
        if gnorm <= cfg.grad_tol:
            reason = "grad_tol"
            break
        if t is None:
            t = min(1.0, 1.0 / gnorm)
        any_finite = False
        accepted = False
        for _ in range(cfg.max_backtracks):
            x_new = x - t * g
            if project is not None:
                x_new = project(x_new)
            f_new = float(fun(x_new))
            if np.isfinite(f_new):
                any_finite = True
                decrease = cfg.armijo * float(np.dot(g, x - x_new))
                if f_new <= f - decrease and f_new <= f:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            if not any_finite:
                raise OptimizationDivergedError("no finite point along the search direction", trace)
            reason = "step_tol"
            break
        step = float(np.linalg.norm(x_new - x))
        x, f = x_new, f_new
        if step <= cfg.step_tol:
            reason = "step_tol"
            break
        t *= 2.0
    else:
        g = np.asarray(grad(x), dtype=float)
        trace.append(TraceRow(cfg.max_iters, f, float(np.linalg.norm(g)), t))
    return OptimizeResult(x, f, trace, reason)


def minimize_nlml(objective, gradient, theta0, cfg=None):
    """Minimize an NLML over log-hyperparameters.

    `objective` and `gradient` take a :class:`HyperParams`; pass
    ``gradient=None`` (or ``cfg.use_finite_diff``) for central differences.
    """
    cfg = cfg or OptimizeConfig()

    def fun(v):
        try:
            return objective(HyperParams.from_vector(v))
        except (ArithmeticError, np.linalg.LinAlgError):
            return np.inf

    if gradient is None or cfg.use_finite_diff:
        grad = None
    else:
        def grad(v):
            return gradient(HyperParams.from_vector(v))

    return gradient_descent(fun, theta0.to_vector(), grad, cfg)


def trace_to_csv(trace, fh=None):
    """Write an optimization trace as CSV; returns the text when `fh` is None."""
    out = fh if fh is not None else io.StringIO()
    w = csv.writer(out)
    w.writerow(["iteration", "objective", "grad_norm", "step"])
    for r in trace:
        w.writerow([r.iteration, repr(r.objective), repr(r.grad_norm), repr(r.step)])
    if fh is None:
        return out.getvalue()
