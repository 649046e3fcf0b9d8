"""Classic step-size rules: strong Wolfe search and doubling 1/L backtracking.

These operate on 1-d callbacks so callers decide whether evaluations are
margin-space (free) or full-space (counted).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class LineSearchError(ValueError):
    pass


@dataclass
class WolfeOptions:
    c1: float = 1e-4
    c2: float = 0.9
    max_evals: int = 50
    growth: float = 2.0

    def __post_init__(self):
        if not (0 < self.c1 < self.c2 < 1):
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass
class WolfeResult:
    alpha: float
    value: float
    success: bool          # both conditions hold at alpha
    verified: bool         # postcondition re-checked by direct evaluation
    evals: int


def strong_wolfe(phi: Callable[[float], float],
                 dphi: Callable[[float], float],
                 alpha_init: float,
                 opts: WolfeOptions | None = None) -> WolfeResult:
    """Bracketing with step doubling, then midpoint zoom (Nocedal alg. 3.5).

    On budget exhaustion, returns the best Armijo-satisfying step seen, or
    alpha=0 with success=False if there is none.
    """
    opts = opts or WolfeOptions()
    phi0 = phi(0.0)
    g0 = dphi(0.0)
    evals = 2
    if g0 >= 0:
        raise LineSearchError("strong_wolfe needs a descent direction")

    c1, c2 = opts.c1, opts.c2
    best_armijo = None  # (alpha, value)

    def armijo_ok(a, fa):
        return fa <= phi0 + c1 * a * g0

    def note(a, fa):
        nonlocal best_armijo
        if armijo_ok(a, fa) and (best_armijo is None or fa < best_armijo[1]):
            best_armijo = (a, fa)

    def finish(a, fa):
        # re-verify by direct evaluation, not from loop bookkeeping
        va = phi(a)
        da = dphi(a)
        ok = (va <= phi0 + c1 * a * g0 + 1e-12 * max(1.0, abs(phi0))
              and abs(da) <= c2 * abs(g0) + 1e-12 * abs(g0))
        return WolfeResult(a, fa, True, bool(ok), evals)

    def fail():
        if best_armijo is not None:
            a, fa = best_armijo
            return WolfeResult(a, fa, False, False, evals)
        return WolfeResult(0.0, phi0, False, False, evals)

    def zoom(lo, f_lo, hi, f_hi):
        nonlocal evals
        while evals < opts.max_evals:
            a = 0.5 * (lo + hi)
            fa = phi(a)
            evals += 1
            note(a, fa)
            if not armijo_ok(a, fa) or fa >= f_lo:
                hi, f_hi = a, fa
                continue
            ga = dphi(a)
            evals += 1
            if abs(ga) <= -c2 * g0:
                return finish(a, fa)
            if ga * (hi - lo) >= 0:
                hi, f_hi = lo, f_lo
            lo, f_lo = a, fa
        return fail()

    a_prev, f_prev = 0.0, phi0
    a = max(alpha_init, 1e-16)
    first = True
    while evals < opts.max_evals:
        fa = phi(a)
        evals += 1
        note(a, fa)
        if not armijo_ok(a, fa) or (not first and fa >= f_prev):
            return zoom(a_prev, f_prev, a, fa)
        ga = dphi(a)
        evals += 1
        if abs(ga) <= -c2 * g0:
            return finish(a, fa)
        if ga >= 0:
            return zoom(a, fa, a_prev, f_prev)
        a_prev, f_prev = a, fa
        a *= opts.growth
        first = False
    return fail()


@dataclass
class LEstimate:
    L: float = 1.0

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("L must be positive")


def backtrack_half(value_at: Callable[[float], float],
                   f0: float, grad_sq: float,
                   est: LEstimate,
                   max_L: float = 1e30) -> tuple[float, float, int]:
    """Double L until f(w - (1/L) grad) <= f0 - (1/(2L)) ||grad||^2.

    value_at(L) must return the objective at the step with constant 1/L.
    Returns (L, accepted value, number of doublings).  The accepted L is the
    one whose trial evaluation satisfied the inequality directly.
    """
    if grad_sq <= 0:
        raise LineSearchError("backtrack_half needs a nonzero gradient")
    L = est.L
    doublings = 0
    while True:
        f_trial = value_at(L)
        if np.isfinite(f_trial) and f_trial <= f0 - grad_sq / (2.0 * L):
            break
        L *= 2.0
        doublings += 1
        if L > max_L:
            raise LineSearchError("curvature estimate exceeded 1e30")
    est.L = L
    return L, f_trial, doublings


def fista_momentum(t: float) -> tuple[float, float]:
    """Next t in the (1 + sqrt(1 + 4 t^2))/2 schedule and the mixing weight."""
    t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
    return t_next, (t - 1.0) / t_next
