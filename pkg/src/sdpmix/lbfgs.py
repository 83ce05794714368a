"""Limited-memory BFGS for the small column subproblems.

Works on vectors of either scalar kind. The stopping rule is relative to
the gradient at the warm-start point: accept v once

    ||grad(v)||_inf < max(eps, delta * ||grad(v_start)||_inf).

History is cleared for every call (the objective changes between columns),
and curvature pairs with s'y <= 1e-12 ||s|| ||y|| are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .ddouble import all_finite, dot, is_finite_scalar, kind_of, norm2, norm_inf

_C1 = 1e-4  # Armijo constant
_C2 = 0.9  # strong Wolfe curvature constant


@dataclass(frozen=True)
class InnerConfig:
    memory: int = 10
    eps: float = 0.01
    delta: float = 0.01
    max_evals: int = 1000

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if self.max_evals < 1:
            raise ValueError("max_evals must be at least 1")


class _Budget(Exception):
    pass


class _NonFinite(Exception):
    pass


class _SearchFailed(Exception):
    pass


def minimize_column(
    objective_grad: Callable[[np.ndarray], Tuple[object, np.ndarray]],
    v_start: np.ndarray,
    config: InnerConfig = InnerConfig(),
) -> Tuple[np.ndarray, int, bool]:
    """Minimize the callable from v_start; returns (v, evals, converged).

    The returned objective value never exceeds the start value: on budget
    exhaustion or line-search failure the best iterate found is returned,
    and a nonfinite evaluation aborts the subproblem with v_start itself.
    """
    state = {"evals": 0, "best_f": None, "best_v": None}

    def ev(v):
        if state["evals"] >= config.max_evals:
            raise _Budget
        state["evals"] += 1
        f, g = objective_grad(v)
        if not is_finite_scalar(f) or not all_finite(g):
            raise _NonFinite
        if state["best_f"] is None or f < state["best_f"]:
            state["best_f"] = f
            state["best_v"] = v.copy()
        return f, g

    try:
        f0, g0 = ev(v_start)
    except _NonFinite:
        return v_start, state["evals"], False
    except _Budget:  # max_evals == 0 is rejected by InnerConfig
        return v_start, state["evals"], False

    threshold = max(config.eps, config.delta * float(norm_inf(g0)))
    if float(norm_inf(g0)) < threshold:
        return v_start, state["evals"], True

    v, f, g = v_start.copy(), f0, g0
    history: list = []
    eps_kind = kind_of(v_start).epsilon

    try:
        while True:
            d = _two_loop(g, history)
            dphi0 = dot(g, d)
            if not dphi0 < 0:
                history.clear()
                d = -g
                dphi0 = dot(g, d)
                if not dphi0 < 0:
                    return state["best_v"], state["evals"], False
            alpha0 = 1.0 if history else min(1.0, 1.0 / (1.0 + float(norm_inf(g))))
            noise = 128.0 * eps_kind * (1.0 + abs(float(f)))
            alpha, f_new, g_new = _wolfe_search(ev, v, f, d, dphi0, alpha0, noise)
            v_new = v + alpha * d
            s = alpha * d
            yv = g_new - g
            sy = dot(s, yv)
            if sy > 1e-12 * float(norm2(s)) * float(norm2(yv)):
                history.append((s, yv, 1.0 / sy))
                if len(history) > config.memory:
                    history.pop(0)
            v, f, g = v_new, f_new, g_new
            if float(norm_inf(g)) < threshold:
                if f > f0:  # roundoff-level ascent: keep the monotone contract
                    return state["best_v"], state["evals"], False
                return v, state["evals"], True
    except _NonFinite:
        return v_start, state["evals"], False
    except (_Budget, _SearchFailed):
        return state["best_v"], state["evals"], False


def _two_loop(g, history):
    """Standard two-loop recursion with gamma = s'y / y'y scaling."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * dot(s, q)
        alphas.append(a)
        q = q - a * y
    if history:
        s, y, _ = history[-1]
        q = q * (dot(s, y) / dot(y, y))
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * dot(y, q)
        q = q + (a - b) * s
    return -q


def _approx_ok(f0, dphi0, f_a, dphi_a, noise):
    """Approximate Wolfe acceptance for steps below function roundoff
    (Hager-Zhang): gradient conditions plus an epsilon-scaled value slack."""
    return f_a <= f0 + noise and dphi_a >= _C2 * dphi0 and dphi_a <= (2.0 * _C1 - 1.0) * dphi0


def _wolfe_search(ev, v0, f0, d, dphi0, alpha0, noise):
    """Strong Wolfe line search (bracket then bisection zoom)."""
    alpha_prev, f_prev = 0.0, f0
    alpha = alpha0
    for it in range(40):
        f_a, g_a = ev(v0 + alpha * d)
        dphi_a = dot(g_a, d)
        armijo = not (f_a > f0 + _C1 * alpha * dphi0)
        if armijo and abs(dphi_a) <= -_C2 * dphi0:
            return alpha, f_a, g_a
        if _approx_ok(f0, dphi0, f_a, dphi_a, noise):
            return alpha, f_a, g_a
        if not armijo or (it > 0 and f_a >= f_prev):
            return _zoom(ev, v0, f0, d, dphi0, alpha_prev, alpha, f_prev, noise)
        if dphi_a >= 0:
            return _zoom(ev, v0, f0, d, dphi0, alpha, alpha_prev, f_a, noise)
        alpha_prev, f_prev = alpha, f_a
        alpha *= 2.1
    raise _SearchFailed


def _zoom(ev, v0, f0, d, dphi0, lo, hi, f_lo, noise):
    for _ in range(50):
        alpha = 0.5 * (lo + hi)
        if alpha == lo or alpha == hi:  # interval exhausted in floating point
            raise _SearchFailed
        f_a, g_a = ev(v0 + alpha * d)
        dphi_a = dot(g_a, d)
        armijo = not (f_a > f0 + _C1 * alpha * dphi0)
        if armijo and abs(dphi_a) <= -_C2 * dphi0:
            return alpha, f_a, g_a
        if _approx_ok(f0, dphi0, f_a, dphi_a, noise):
            return alpha, f_a, g_a
        if not armijo or f_a >= f_lo:
            hi = alpha
        else:
            if dphi_a * (hi - lo) >= 0:
                hi = lo
            lo, f_lo = alpha, f_a
    raise _SearchFailed
