"""Command-line front end: solve, generate, check.

Exit codes are the machine contract: 0 success (solve reached tol / check
passed the threshold), 2 solver stopped early or check above threshold,
1 input error. Logs go to stderr (SDPMIX_VERBOSE=0/1/2), reports to files
and stdout.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .ddouble import DOUBLE_DOUBLE
from .errors import SdpmixError
from .formats import (
    parse_problem,
    read_graph,
    read_solution,
    read_warmstart,
    write_native,
    write_solution,
    write_warmstart,
)
from .instances import gen_random_sdp, maxcut_relaxation, theta_relaxation
from .linops import project_psd
from .precision import promote, solve_two_stage
from .solver import SolverOptions, compute_errors, solve

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_LIMIT = 2


def _verbosity() -> int:
    try:
        return int(os.environ.get("SDPMIX_VERBOSE", "0"))
    except ValueError:
        return 0


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _progress_printer():
    level = _verbosity()
    if level <= 0:
        return None
    stride = 1 if level >= 2 else 100

    def emit(row: dict) -> None:
        if row["iter"] % stride == 0:
            _log(
                "iter {iter:6d}  mu {mu:9.3e}  ratio {ratio:9.3e}  pinf {pinf:9.3e}  "
                "gap {gap:9.3e}  compl* {compl_star:9.3e}  t {elapsed:8.2f}s".format(**row)
            )

    return emit


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=1e-12, help="stopping tolerance (default 1e-12)")
    p.add_argument("--mu-start", type=float, default=None, help="initial penalty (default sqrt of largest block)")
    p.add_argument("--time-limit", type=float, default=None, help="wall-clock limit in seconds")
    p.add_argument("--max-iters", type=int, default=None, help="outer iteration cap")
    p.add_argument("--iters-z", type=int, default=50, help="dual slack check cadence (default 50)")
    p.add_argument("--no-scaling", action="store_true", help="disable automatic data scaling")
    p.add_argument("--shuffling", action="store_true", help="randomize column order each iteration")
    p.add_argument("--double-sweep", action="store_true", help="forward then reverse column sweeps")
    p.add_argument("--p", type=float, default=1.0, help="dual step size (default 1)")
    p.add_argument("--delta", type=float, default=0.01, help="relative column tolerance (default 0.01)")
    p.add_argument("--epsilon", type=float, default=0.01, help="absolute column tolerance (default 0.01)")
    p.add_argument("--max-evals", type=int, default=1000, help="evaluation budget per column update")
    p.add_argument("--tau", type=float, default=1.03, help="penalty update factor (default 1.03)")
    p.add_argument("--rat-min", type=float, default=0.8, help="lower ratio threshold (default 0.8)")
    p.add_argument("--rat-max", type=float, default=1.2, help="upper ratio threshold (default 1.2)")
    p.add_argument("--seed", type=int, default=0, help="initialization seed (default 0)")


def _options_from(args) -> SolverOptions:
    return SolverOptions(
        tol=args.tol,
        mu_start=args.mu_start,
        time_limit=args.time_limit,
        max_iters=args.max_iters,
        iters_Z=args.iters_z,
        scaling=not args.no_scaling,
        shuffling=args.shuffling,
        double_sweep=args.double_sweep,
        p=args.p,
        delta=args.delta,
        epsilon=args.epsilon,
        max_evals=args.max_evals,
        tau=args.tau,
        rat_min=args.rat_min,
        rat_max=args.rat_max,
        seed=args.seed,
    )


def cmd_solve(args) -> int:
    try:
        problem = parse_problem(args.input)
        options = _options_from(args)
        warm = read_warmstart(args.warm_start) if args.warm_start else None
    except (SdpmixError, OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT

    progress = _progress_printer()
    try:
        if args.precision == "dd":
            if warm is not None:
                from .problem import as_kind

                sol, warm_out = solve(
                    as_kind(problem, DOUBLE_DOUBLE), options, warm_start=promote(warm, DOUBLE_DOUBLE),
                    progress=progress,
                )
            else:
                sol = solve_two_stage(problem, args.tol, options, progress=progress)
                warm_out = None
        else:
            sol, warm_out = solve(problem, options, warm_start=warm, progress=progress)
    except SdpmixError as exc:
        _log(f"solver aborted: {exc}")
        return EXIT_LIMIT

    out_path = args.output or str(Path(str(args.input)).with_suffix(".sol"))
    write_solution(sol, out_path, include_z=not args.no_z)
    if args.save_warm_start:
        if warm_out is None:
            _log("note: no warm start available from a two-stage run; rerun with --warm-start to resume")
        else:
            write_warmstart(warm_out, args.save_warm_start)

    print(f"status {sol.status}")
    print(f"iterations {sol.iterations}")
    print(f"elapsed {sol.elapsed:.3f}")
    print(f"objective {float(sol.objective)!r}")
    for key, val in sol.report.as_dict().items():
        print(f"{key} {'none' if val is None else repr(val)}")
    print(f"solution {out_path}")
    return EXIT_OK if sol.status == "tol" else EXIT_LIMIT


def _parse_blocks(spec: str):
    sizes = []
    for part in spec.split(","):
        part = part.strip()
        if "x" in part:
            count, size = part.split("x", 1)
            sizes.extend([int(size)] * int(count))
        elif part:
            sizes.append(int(part))
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError(f"bad block specification {spec!r}")
    return tuple(sizes)


def cmd_generate(args) -> int:
    try:
        if args.family == "rand":
            problem = gen_random_sdp(_parse_blocks(args.blocks), args.m, args.density, args.seed)
            sense, offset = 1, 0.0
        elif args.family == "maxcut":
            graph = read_graph(args.graph)
            inst = maxcut_relaxation(graph, with_triangles=args.triangles)
            problem, sense, offset = inst.problem, inst.sense, inst.offset
        else:
            graph = read_graph(args.graph)
            inst = theta_relaxation(graph, strengthened=args.strengthened)
            problem, sense, offset = inst.problem, inst.sense, inst.offset
    except (SdpmixError, OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT

    write_native(problem, args.output)
    blocks = ",".join(str(n) for n in problem.block_sizes)
    print(f"family {args.family} blocks {blocks} m_a {problem.m_eq} m_b {problem.m_ineq}")
    if sense != 1 or offset != 0.0:
        print(f"objective_map reported = {sense} * solver_objective + {offset!r}")
    print(f"problem {args.output}")
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        problem = parse_problem(args.problem)
        sol = read_solution(args.solution)
        if len(sol.factor) != problem.q:
            raise SdpmixError(
                f"solution has {len(sol.factor)} blocks, problem has {problem.q}"
            )
        for b, F in enumerate(sol.factor):
            if F.shape[1] != problem.block_sizes[b]:
                raise SdpmixError(
                    f"solution block {b + 1} has {F.shape[1]} columns, block size is {problem.block_sizes[b]}"
                )
        if len(sol.y_a) != problem.m_eq or len(sol.y_b) != problem.m_ineq:
            raise SdpmixError("dual vector lengths do not match the problem")
    except (SdpmixError, OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_INPUT

    Z = sol.Z
    if Z is None:
        from .linops import apply_adjoint

        combo = apply_adjoint(problem, np.concatenate([sol.y_a, sol.y_b]))
        Z = [project_psd(problem.costs[b].to_dense() - combo[b]) for b in range(problem.q)]
    report = compute_errors(problem, sol.X, sol.y_a, sol.y_b, Z)
    for key, val in report.as_dict().items():
        print(f"{key} {val!r}")
    max_err = float(report.max_error())
    print(f"max_error {max_err!r}")
    print(f"threshold {args.threshold!r}")
    return EXIT_OK if max_err < args.threshold else EXIT_LIMIT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdpmix", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve a problem file (native .sdp or SDPA .dat-s)")
    ps.add_argument("input", help="problem file")
    ps.add_argument("-o", "--output", default=None, help="solution file (default: input with .sol)")
    ps.add_argument("--warm-start", default=None, help="resume from a warm-start file")
    ps.add_argument("--save-warm-start", default=None, help="write the final warm start here")
    ps.add_argument("--no-z", action="store_true", help="omit the dual slack matrix from the solution file")
    ps.add_argument("--precision", choices=("double", "dd"), default="double",
                    help="dd runs the two-stage double-double refinement to --tol")
    _add_solver_flags(ps)
    ps.set_defaults(func=cmd_solve)

    pg = sub.add_parser("generate", help="generate a problem file")
    gsub = pg.add_subparsers(dest="family", required=True)
    pr = gsub.add_parser("rand", help="random SDP with identity first constraint")
    pr.add_argument("--blocks", required=True, help="block sizes, e.g. '30' or '2x20' or '5,2x20'")
    pr.add_argument("--m", type=int, required=True, help="number of equality constraints")
    pr.add_argument("--density", type=float, default=1.0, help="data density in (0,1]")
    pr.add_argument("--seed", type=int, default=0)
    pm = gsub.add_parser("maxcut", help="Max-Cut relaxation from a graph file")
    pm.add_argument("--graph", required=True)
    pm.add_argument("--triangles", action="store_true", help="add all 4C(n,3) triangle inequalities")
    pt = gsub.add_parser("theta", help="stability-number relaxation from a graph file")
    pt.add_argument("--graph", required=True)
    pt.add_argument("--strengthened", action="store_true", help="add nonnegativity off the edges")
    for sp in (pr, pm, pt):
        sp.add_argument("-o", "--output", required=True, help="native problem file to write")
        sp.set_defaults(func=cmd_generate)

    pc = sub.add_parser("check", help="recompute KKT errors of a solution file")
    pc.add_argument("problem")
    pc.add_argument("solution")
    pc.add_argument("--threshold", type=float, default=1e-8, help="pass/fail bound on the max error")
    pc.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
