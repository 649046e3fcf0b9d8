"""Low-dimensional subspace subproblem solver.

Barzilai-Borwein spectral steps safeguarded by a non-monotone Armijo
backtracking rule; subproblems that expose a Hessian get damped Newton steps
instead.  Starts at zero (unless warm-started) and returns the best point
seen, so the result can never be worse than the zero step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class SubProblem:
    dim: int
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    # optional dense Hessian; when present the solver tries damped Newton
    # steps first and falls back to the spectral step
    hess: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass
class SubSolverOptions:
    max_iters: int = 100
    memory: int = 10                 # non-monotone reference window
    armijo: float = 1e-4
    grad_tol: float = 1e-10
    bb_min: float = 1e-10
    bb_max: float = 1e10
    theta_cap: float = 1e8           # reject trial points beyond this box
    max_backtracks: int = 60


@dataclass
class SubSolveResult:
    theta: np.ndarray
    value: float
    inner_iters: int
    converged: bool = True
    history: list = field(default_factory=list)


def _safe_value(phi, theta, cap):
    if np.max(np.abs(theta)) > cap:
        return np.inf
    v = phi(theta)
    if not np.isfinite(v):
        return np.inf
    return float(v)


def solve(sp: SubProblem, opts: SubSolverOptions | None = None,
          theta0: np.ndarray | None = None) -> SubSolveResult:
    """Minimize sp.value, guaranteeing value(theta*) <= value(0)."""
    opts = opts or SubSolverOptions()
    p = sp.dim
    zero = np.zeros(p)
    f_zero = float(sp.value(zero))
    if not np.isfinite(f_zero):
        raise ValueError("subproblem value at zero must be finite")

    best_theta, best_f = zero.copy(), f_zero

    theta = zero.copy()
    f = f_zero
    if theta0 is not None:
        theta0 = np.asarray(theta0, dtype=np.float64)
        f0 = _safe_value(sp.value, theta0, opts.theta_cap)
        if f0 < best_f:
            best_theta, best_f = theta0.copy(), f0
        if np.isfinite(f0):
            theta, f = theta0.copy(), f0

    g = np.asarray(sp.grad(theta), dtype=np.float64)
    tol = opts.grad_tol * max(1.0, float(np.linalg.norm(g)))
    recent = [f]
    prev_theta = None
    prev_grad = None

    iters = 0
    for iters in range(1, opts.max_iters + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol or not np.isfinite(gnorm):
            break

        direction = None
        if sp.hess is not None:
            try:
                cand = np.linalg.solve(sp.hess(theta), -g)
            except np.linalg.LinAlgError:
                cand = None
            if (cand is not None and np.all(np.isfinite(cand))
                    and float(g @ cand) < 0):
                direction = cand
                t = 1.0

        if direction is None:
            direction = -g
            if prev_theta is None:
                t = 1.0 / max(1.0, gnorm)
            else:
                s = theta - prev_theta
                yv = g - prev_grad
                sy = float(s @ yv)
                if sy > 0:
                    t = float(s @ s) / sy
                    t = min(max(t, opts.bb_min), opts.bb_max)
                else:
                    t = 1.0

        slope = float(g @ direction)
        f_ref = max(recent)
        accepted = False
        for _ in range(opts.max_backtracks):
            trial = theta + t * direction
            f_trial = _safe_value(sp.value, trial, opts.theta_cap)
            if f_trial <= f_ref + opts.armijo * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break

        prev_theta, prev_grad = theta, g
        theta, f = trial, f_trial
        g = np.asarray(sp.grad(theta), dtype=np.float64)
        recent.append(f)
        if len(recent) > opts.memory:
            recent.pop(0)
        if f < best_f:
            best_theta, best_f = theta.copy(), f

    return SubSolveResult(best_theta, best_f, iters)
