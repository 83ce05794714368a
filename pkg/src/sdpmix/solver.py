"""Outer loop: column sweeps, dual updates, dynamic penalty, termination.

One outer iteration minimizes the augmented Lagrangian approximately over
every column of every factor block (warm-started L-BFGS per column), then
applies the first-order dual update and steers the penalty parameter so
that the primal residual keeps shrinking geometrically: the ratio of the
residual norm to mu times the per-iteration change of the constraint
values is held near 1, increasing mu above rat_max and decreasing it
below rat_min.

Termination measures the four KKT errors on the scaled problem. The dual
slack matrix (a PSD projection) is expensive, so it is evaluated only
every iters_Z iterations and only once the three cheap measures
(pinf, gap, compl*) are already below tol.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable, List, Optional

import numpy as np

from .auglag import ColumnContext, IterateState, commit_column, make_state, refresh_cache
from .ddouble import (
    ScalarKind,
    all_finite,
    dot,
    fsqrt,
    is_finite_scalar,
    kind_of,
    norm2,
    norm_inf,
)
from .errors import NumericalError, ValidationError
from .lbfgs import InnerConfig, minimize_column
from .linops import ColumnSlices, OperatorTables, apply_adjoint, project_psd
from .problem import ScalingRecord, SdpProblem, scale, validate


def ceil_sqrt(x: int) -> int:
    s = math.isqrt(x)
    return s if s * s == x else s + 1


def rank_rule(n: int, m_eq: int, m_ineq: int) -> int:
    """Factor rank k = min(n, ceil(sqrt(2 m))), the low-rank existence bound."""
    return min(n, ceil_sqrt(2 * (m_eq + m_ineq)))


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-12
    mu_start: Optional[float] = None  # default sqrt(max block size)
    time_limit: Optional[float] = None
    max_iters: Optional[int] = None
    iters_Z: int = 50
    scaling: bool = True
    shuffling: bool = False
    double_sweep: bool = False
    p: float = 1.0
    delta: float = 0.01
    epsilon: float = 0.01
    max_evals: int = 1000
    tau: float = 1.03
    rat_min: float = 0.8
    rat_max: float = 1.2
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.mu_start is not None and not self.mu_start > 0:
            raise ValueError("mu_start must be positive")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.iters_Z < 1:
            raise ValueError("iters_Z must be at least 1")
        if not self.p > 0:
            raise ValueError("p must be positive")
        if not self.tau > 1:
            raise ValueError("tau must exceed 1")
        if not (0 < self.rat_min < self.rat_max):
            raise ValueError("need 0 < rat_min < rat_max")
        if not self.delta > 0 or not self.epsilon > 0 or self.max_evals < 1:
            raise ValueError("delta/epsilon must be positive and max_evals at least 1")


@dataclass
class ErrorReport:
    """Normalized KKT error measures; dinf/compl appear once Z is known."""

    pinf: object
    gap: object
    compl_star: object
    dinf: object = None
    compl: object = None

    def max_error(self):
        vals = [self.pinf, self.gap, self.compl_star]
        if self.dinf is not None:
            vals.append(self.dinf)
        if self.compl is not None:
            vals.append(self.compl)
        return max(vals)

    def as_dict(self) -> dict:
        out = {"pinf": float(self.pinf), "gap": float(self.gap), "compl_star": float(self.compl_star)}
        out["dinf"] = None if self.dinf is None else float(self.dinf)
        out["compl"] = None if self.compl is None else float(self.compl)
        return out


@dataclass
class WarmStart:
    """Scaled-space resume state from a previous solve."""

    V_blocks: List[np.ndarray]
    y_a: np.ndarray
    y_b: np.ndarray
    mu: object

    @property
    def kind(self) -> ScalarKind:
        return kind_of(self.y_a if len(self.y_a) else self.V_blocks[0])


@dataclass
class Solution:
    """Primal-dual solution in the caller's (unscaled) data space."""

    X: List[np.ndarray]
    factor: List[np.ndarray]
    y_a: np.ndarray
    y_b: np.ndarray
    Z: Optional[List[np.ndarray]]
    status: str
    report: Optional[ErrorReport]
    iterations: int = 0
    elapsed: float = 0.0
    objective: object = None

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.y_a, self.y_b])


def _pos_part(arr: np.ndarray, kind: ScalarKind) -> np.ndarray:
    if len(arr) == 0:
        return arr
    if arr.dtype == object:
        return np.where(arr > 0, arr, kind.from_float(0.0))
    return np.maximum(arr, 0.0)


def init_state(problem: SdpProblem, options: SolverOptions,
               tables: OperatorTables | None = None,
               slices: ColumnSlices | None = None) -> IterateState:
    """Columns i.i.d. uniform on the unit sphere, zero duals, mu = mu_start."""
    kind = problem.kind
    rng = np.random.default_rng(options.seed)
    V_blocks = []
    for n in problem.block_sizes:
        ki = rank_rule(n, problem.m_eq, problem.m_ineq)
        V = kind.asarray(rng.standard_normal((ki, n)))
        for i in range(n):
            col = V[:, i]
            nrm = norm2(col)
            if float(nrm) > 0:
                V[:, i] = col / nrm
        V_blocks.append(V)
    mu0 = options.mu_start if options.mu_start is not None else math.sqrt(max(problem.block_sizes))
    return make_state(
        problem,
        V_blocks,
        kind.zeros(problem.m_eq),
        kind.zeros(problem.m_ineq),
        kind.from_float(mu0),
        tables=tables,
        slices=slices,
    )


def state_from_warm(problem: SdpProblem, warm: WarmStart,
                    tables: OperatorTables | None = None,
                    slices: ColumnSlices | None = None) -> IterateState:
    kind = problem.kind
    if len(warm.V_blocks) != problem.q:
        raise ValidationError(f"warm start has {len(warm.V_blocks)} blocks, problem has {problem.q}")
    for b, V in enumerate(warm.V_blocks):
        if V.shape[1] != problem.block_sizes[b]:
            raise ValidationError(f"warm start block {b + 1}: {V.shape[1]} columns, block size {problem.block_sizes[b]}")
    if len(warm.y_a) != problem.m_eq or len(warm.y_b) != problem.m_ineq:
        raise ValidationError("warm start dual vector lengths do not match the problem")
    if len(warm.y_b) and not bool(np.all(warm.y_b >= 0)):
        raise ValidationError("warm start has negative inequality multipliers")
    if not float(warm.mu) > 0:
        raise ValidationError("warm start has nonpositive mu")
    return make_state(
        problem,
        [kind.asarray(V) for V in warm.V_blocks],
        kind.asarray(warm.y_a),
        kind.asarray(warm.y_b),
        kind.coerce_scalar(warm.mu),
        tables=tables,
        slices=slices,
    )


def sweep_order(n: int, iteration: int, options: SolverOptions) -> np.ndarray:
    """Column visit order for one outer iteration (0-based indices)."""
    if options.shuffling:
        rng = np.random.default_rng((options.seed, iteration))
        order = rng.permutation(n)
    else:
        order = np.arange(n)
    if options.double_sweep:
        order = np.concatenate([order, order[::-1]])
    return order


def update_duals(state: IterateState, problem: SdpProblem, p: float) -> None:
    """First-order multiplier step; inequality duals clipped at zero."""
    mu = state.mu
    state.y_a = state.y_a + (p * mu) * state.residual_eq()
    t = state.y_b + (p * mu) * state.residual_ineq()
    state.y_b = _pos_part(t, state.kind)


def penalty_ratio(state: IterateState, problem: SdpProblem):
    """Residual norm over mu times the constraint-value movement, on the
    active inequalities (nonnegative residual or positive multiplier)."""
    kind = state.kind
    m_a = problem.m_eq
    r = state.residual_eq()
    s = state.residual_ineq()
    active = (s >= 0) | (state.y_b > 0) if len(s) else np.zeros(0, dtype=bool)
    num_sq = dot(r, r) + dot(s[active], s[active])
    num = fsqrt(num_sq)
    if not float(num) > 0.0:
        return 0.0
    diff = state.cache.values - state.prev_values
    d_eq = diff[:m_a]
    d_in = diff[m_a:][active]
    den = state.mu * fsqrt(dot(d_eq, d_eq) + dot(d_in, d_in))
    if not float(den) > 0.0:
        return math.inf
    return float(num / den)


def update_penalty(state: IterateState, ratio: float, options: SolverOptions) -> None:
    if ratio > options.rat_max:  # also catches the +inf sentinel
        state.mu = state.mu * options.tau
    elif ratio < options.rat_min:
        state.mu = state.mu / options.tau
    # unchanged otherwise


def compute_errors(problem: SdpProblem, X_blocks, y_a, y_b, Z_blocks=None) -> ErrorReport:
    """KKT error measures from dense X (and Z when supplied); independent of
    the factored-iterate caches."""
    kind = problem.kind
    vals = kind.zeros(problem.m)
    for j, con in enumerate(problem.constraints):
        for b, mat in con:
            vals[j] = vals[j] + mat.inner_dense(X_blocks[b])
    pobj = kind.from_float(0.0)
    for b, c in enumerate(problem.costs):
        pobj = pobj + c.inner_dense(X_blocks[b])
    a = problem.rhs_eq
    bvec = problem.rhs_ineq
    r = a - vals[: problem.m_eq]
    s = bvec - vals[problem.m_eq :]
    viol = norm_inf(_pos_part(s, kind)) if len(s) else kind.from_float(0.0)
    pinf_num = max(norm_inf(r), viol)
    pinf_den = 1.0 + float(max(norm_inf(a), norm_inf(bvec)))
    pinf = pinf_num / pinf_den

    dobj = dot(a, y_a) + dot(bvec, y_b)
    denom = 1.0 + abs(pobj) + abs(dobj)
    gap = abs(pobj - dobj) / denom

    dual_val = dot(y_a, vals[: problem.m_eq]) + dot(y_b, vals[problem.m_eq :])
    compl_star = abs(pobj - dual_val) / denom

    report = ErrorReport(pinf=pinf, gap=gap, compl_star=compl_star)
    if Z_blocks is not None:
        combo = apply_adjoint(problem, np.concatenate([y_a, y_b]))
        resid_sq = kind.from_float(0.0)
        cost_sq = kind.from_float(0.0)
        xz = kind.from_float(0.0)
        for b in range(problem.q):
            Cd = problem.costs[b].to_dense()
            R = Cd - combo[b] - Z_blocks[b]
            resid_sq = resid_sq + np.sum(R * R)
            cost_sq = cost_sq + problem.costs[b].frob_sq()
            xz = xz + np.sum(X_blocks[b] * Z_blocks[b])
        report.dinf = fsqrt(resid_sq) / (1.0 + float(fsqrt(cost_sq)))
        report.compl = abs(xz) / denom
    return report


def _cheap_errors(state: IterateState):
    """pinf/gap/compl* of the scaled problem from the operator cache."""
    p = state.problem
    kind = state.kind
    r = state.residual_eq()
    s = state.residual_ineq()
    viol = norm_inf(_pos_part(s, kind)) if len(s) else kind.from_float(0.0)
    pinf_den = 1.0 + float(max(norm_inf(p.rhs_eq), norm_inf(p.rhs_ineq)))
    pinf = max(norm_inf(r), viol) / pinf_den
    pobj = state.cache.cost_value
    dobj = dot(p.rhs_eq, state.y_a) + dot(p.rhs_ineq, state.y_b)
    denom = 1.0 + abs(pobj) + abs(dobj)
    gap = abs(pobj - dobj) / denom
    dual_val = dot(state.y_a, state.values_eq()) + dot(state.y_b, state.values_ineq())
    compl_star = abs(pobj - dual_val) / denom
    return pinf, gap, compl_star


def _dual_slack_blocks(problem: SdpProblem, y_a, y_b):
    combo = apply_adjoint(problem, np.concatenate([y_a, y_b]))
    return [problem.costs[b].to_dense() - combo[b] for b in range(problem.q)]


def unscale_solution(sol: Solution, record: ScalingRecord, original: SdpProblem) -> Solution:
    """Map a scaled-space solution back to the original data and recompute
    the error report (including a fresh dual slack projection) on it."""
    if len(record.constraint_norms) != original.m:
        raise ValidationError("scaling record does not match the problem (constraint count)")
    for b, X in enumerate(sol.X):
        if X.shape[0] != original.block_sizes[b]:
            raise ValidationError("scaling record / problem mismatch (block orders)")
    kind = original.kind
    gamma = record.primal_scale
    sqrt_gamma = fsqrt(gamma)
    factor = [sqrt_gamma * V for V in sol.factor]
    # X from the unscaled factor, so anything reconstructing X from a stored
    # factor (e.g. the check command) reproduces these exact values
    X = [F.T @ F for F in factor]
    dual_factors = record.cost_norm / record.constraint_norms
    y_a = dual_factors[: original.m_eq] * sol.y_a
    y_b = dual_factors[original.m_eq :] * sol.y_b
    Z = [project_psd(M) for M in _dual_slack_blocks(original, y_a, y_b)]
    report = compute_errors(original, X, y_a, y_b, Z)
    pobj = kind.from_float(0.0)
    for b, c in enumerate(original.costs):
        pobj = pobj + c.inner_dense(X[b])
    return replace(
        sol, X=X, factor=factor, y_a=y_a, y_b=y_b, Z=Z, report=report, objective=pobj
    )


def solve(
    problem: SdpProblem,
    options: SolverOptions | None = None,
    warm_start: WarmStart | None = None,
    progress: Callable[[dict], None] | None = None,
):
    """Run the solver; returns (Solution, WarmStart).

    The solution is stated for the original problem with errors recomputed
    from scratch on it; the warm start stays in scaled space so a later
    call (possibly at a higher-precision kind) can resume.
    """
    options = options or SolverOptions()
    validate(problem)
    t_start = time.perf_counter()

    if options.scaling:
        scaled, record = scale(problem)
    else:
        scaled, record = problem, ScalingRecord.identity(problem)

    tables = OperatorTables(scaled)
    slices = ColumnSlices(scaled)
    if warm_start is not None:
        state = state_from_warm(scaled, warm_start, tables=tables, slices=slices)
    else:
        state = init_state(scaled, options, tables=tables, slices=slices)

    pairs = [(b, i) for b in range(scaled.q) for i in range(scaled.block_sizes[b])]
    status = None
    iteration = 0
    # The absolute part of the column stopping rule follows the outer KKT
    # error downward: a fixed floor would freeze all columns once their
    # gradients drop below it and stall the solve at that level, while the
    # relative part (delta) alone would over-solve the early subproblems.
    err_level = 1.0

    def elapsed() -> float:
        return time.perf_counter() - t_start

    def out_of_time() -> bool:
        return options.time_limit is not None and elapsed() >= options.time_limit

    while status is None:
        if options.max_iters is not None and iteration >= options.max_iters:
            status = "iter"
            break
        if out_of_time():
            status = "time"
            break
        iteration += 1

        inner_cfg = InnerConfig(
            memory=10,
            eps=max(options.epsilon * min(1.0, err_level), 1e-300),
            delta=options.delta,
            max_evals=options.max_evals,
        )
        for t in sweep_order(len(pairs), iteration, options):
            if out_of_time():
                status = "time"
                break
            b, i = pairs[t]
            ctx = ColumnContext(state, b, i)
            v_new, _, _ = minimize_column(ctx.value_and_grad, ctx.v_start, inner_cfg)
            commit_column(state, b, i, v_new)
        if status is not None:
            break

        refresh_cache(state)
        if not all_finite(state.cache.values) or not is_finite_scalar(state.cache.cost_value):
            raise NumericalError(f"nonfinite iterate at outer iteration {iteration} (mu={float(state.mu):.3e})")

        update_duals(state, scaled, options.p)
        if not (all_finite(state.y_a) and all_finite(state.y_b) and is_finite_scalar(state.mu)):
            raise NumericalError(f"nonfinite duals at outer iteration {iteration} (mu={float(state.mu):.3e})")
        assert len(state.y_b) == 0 or bool(np.all(state.y_b >= 0))
        ratio = penalty_ratio(state, scaled)
        update_penalty(state, ratio, options)
        state.prev_values = state.cache.values.copy()

        pinf, gap, compl_star = _cheap_errors(state)
        err_level = float(max(pinf, gap, compl_star))
        if progress is not None:
            progress(
                {
                    "iter": iteration,
                    "mu": float(state.mu),
                    "ratio": ratio,
                    "pinf": float(pinf),
                    "gap": float(gap),
                    "compl_star": float(compl_star),
                    "elapsed": elapsed(),
                    "hinge_evals": state.counters["hinge_evals"],
                }
            )

        proxy_ok = max(pinf, gap, compl_star) < options.tol
        if proxy_ok and iteration % options.iters_Z == 0:
            Z_blocks = [project_psd(M) for M in _dual_slack_blocks(scaled, state.y_a, state.y_b)]
            X_blocks = [V.T @ V for V in state.V_blocks]
            full = compute_errors(scaled, X_blocks, state.y_a, state.y_b, Z_blocks)
            if max(full.pinf, full.gap, full.dinf, full.compl) < options.tol:
                status = "tol"

    warm = WarmStart(
        [V.copy() for V in state.V_blocks],
        state.y_a.copy(),
        state.y_b.copy(),
        state.mu,
    )
    scaled_sol = Solution(
        X=[V.T @ V for V in state.V_blocks],
        factor=[V.copy() for V in state.V_blocks],
        y_a=state.y_a,
        y_b=state.y_b,
        Z=None,
        status=status,
        report=None,
        iterations=iteration,
        elapsed=elapsed(),
    )
    solution = unscale_solution(scaled_sol, record, problem)
    solution.elapsed = elapsed()
    return solution, warm
