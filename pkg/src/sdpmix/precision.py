"""Two-stage extended-precision refinement.

Stage 1 solves at binary64 with tol 1e-12; stage 2 re-instantiates the
problem data at double-double, promotes the warm start (exactly: every
binary64 value embeds in double-double), and resumes until the target
tolerance. Iteration and time totals cover both stages.
"""

from __future__ import annotations

from dataclasses import replace

from .ddouble import DOUBLE, DOUBLE_DOUBLE, ScalarKind, at_least_as_precise
from .problem import SdpProblem, as_kind
from .solver import Solution, SolverOptions, WarmStart, solve

STAGE1_TOL = 1e-12


def promote(warm: WarmStart, kind: ScalarKind) -> WarmStart:
    """Convert a warm start to `kind`; widening only, values exact."""
    source = warm.kind
    if not at_least_as_precise(kind, source):
        raise ValueError(f"narrowing conversion requested: {source.name} -> {kind.name}")
    return WarmStart(
        [kind.asarray(V) for V in warm.V_blocks],
        kind.asarray(warm.y_a),
        kind.asarray(warm.y_b),
        kind.coerce_scalar(warm.mu),
    )


def solve_two_stage(
    problem: SdpProblem,
    target_tol: float,
    options: SolverOptions | None = None,
    kind: ScalarKind = DOUBLE_DOUBLE,
    progress=None,
) -> Solution:
    """Binary64 solve, then extended-precision refinement to target_tol."""
    options = options or SolverOptions()
    if problem.kind is not DOUBLE:
        raise ValueError("two-stage solve starts from binary64 problem data")
    stage1 = replace(options, tol=STAGE1_TOL)
    sol1, warm = solve(problem, stage1, progress=progress)
    if sol1.status != "tol" or target_tol >= STAGE1_TOL:
        # failure propagates; an already-met target needs no refinement
        return sol1

    problem_x = as_kind(problem, kind)
    warm_x = promote(warm, kind)
    remaining = None
    if options.time_limit is not None:
        remaining = max(options.time_limit - sol1.elapsed, 1e-3)
    stage2 = replace(options, tol=target_tol, time_limit=remaining)
    sol2, _ = solve(problem_x, stage2, warm_start=warm_x, progress=progress)
    sol2.iterations += sol1.iterations
    sol2.elapsed += sol1.elapsed
    return sol2
