"""Instance generators: random SDPs, Max-Cut relaxations, stability-number bounds.

The solver is a minimizer, so maximization families are emitted negated;
each generated instance carries the sign and the constant objective offset
needed to state results in the family's usual orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .linops import apply_operator
from .problem import SdpProblem, SymMatrix, validate


@dataclass(frozen=True)
class Graph:
    """Simple undirected weighted graph; edges stored with i < j (0-based)."""

    n: int
    edges: Tuple[Tuple[int, int, float], ...]

    @classmethod
    def build(cls, n: int, edges: Sequence) -> "Graph":
        if n < 1:
            raise ValidationError(f"graph needs at least one vertex, got {n}")
        seen = set()
        out = []
        for e in edges:
            i, j, w = (e[0], e[1], e[2]) if len(e) == 3 else (e[0], e[1], 1.0)
            if i == j:
                raise ValidationError(f"graph has a loop at vertex {i + 1}")
            if i > j:
                i, j = j, i
            if not (0 <= i < j < n):
                raise ValidationError(f"edge ({i + 1},{j + 1}) out of range for {n} vertices")
            if (i, j) in seen:
                raise ValidationError(f"duplicate edge ({i + 1},{j + 1})")
            if not math.isfinite(w):
                raise ValidationError(f"edge ({i + 1},{j + 1}) has nonfinite weight")
            seen.add((i, j))
            out.append((i, j, float(w)))
        return cls(n, tuple(sorted(out)))

    @classmethod
    def complete(cls, n: int, weight: float = 1.0) -> "Graph":
        return cls.build(n, [(i, j, weight) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def cycle(cls, n: int, weight: float = 1.0) -> "Graph":
        return cls.build(n, [(i, (i + 1) % n, weight) for i in range(n)])

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls.build(n, [])

    @property
    def m(self) -> int:
        return len(self.edges)

    def edge_set(self) -> set:
        return {(i, j) for i, j, _ in self.edges}


@dataclass(frozen=True)
class GeneratedInstance:
    """A problem plus the orientation metadata of its family."""

    problem: SdpProblem
    family: str
    sense: int = 1  # +1: solver minimum is the reported value; -1: negated
    offset: float = 0.0

    def reported_objective(self, solver_value) -> float:
        """Solver-space minimum mapped to the family's usual orientation."""
        return self.sense * float(solver_value) + self.offset

    def shifted_objective(self, solver_value) -> float:
        """Same, without the constant offset."""
        return self.sense * float(solver_value)


def gen_random_sdp(block_sizes: Sequence[int], m: int, density: float, seed: int) -> SdpProblem:
    """Random equality-constrained SDP with A_1 = I and a_j = trace(A_j),
    so X = I is strictly feasible by construction."""
    if m < 1:
        raise ValidationError("need at least one constraint")
    if not (0 < density <= 1):
        raise ValidationError(f"density must lie in (0, 1], got {density}")
    block_sizes = tuple(int(n) for n in block_sizes)
    rng = np.random.default_rng(seed)

    def random_sym(n: int) -> SymMatrix:
        entries = [
            (r, c, rng.uniform(-1.0, 1.0))
            for r in range(n)
            for c in range(r, n)
            if rng.random() < density
        ]
        return SymMatrix.from_entries(n, entries)

    costs = [random_sym(n) for n in block_sizes]
    constraints = [{b: SymMatrix.from_entries(n, [(i, i, 1.0) for i in range(n)]) for b, n in enumerate(block_sizes)}]
    for _ in range(m - 1):
        while True:
            con = {b: random_sym(n) for b, n in enumerate(block_sizes)}
            if any(mat.nnz for mat in con.values()):
                break
        constraints.append(con)

    shell = SdpProblem.build(block_sizes, costs, constraints, np.zeros(m), m + 1)
    rhs = apply_operator(shell, [np.eye(n) for n in block_sizes])
    problem = SdpProblem.build(block_sizes, costs, constraints, rhs, m + 1)
    validate(problem)
    return problem


def maxcut_relaxation(graph: Graph, with_triangles: bool = False) -> GeneratedInstance:
    """Max-Cut SDP bound: maximize <L/4, X> over correlation matrices.

    The cost diagonal is identically 1/4 of the weighted degrees and only
    shifts the objective by a constant under diag(X) = 1, so it is dropped
    from the data and reported as the instance offset. Optionally all
    4 C(n,3) triangle inequalities are added.
    """
    n = graph.n
    if with_triangles and n < 3:
        raise ValidationError("triangle inequalities need at least 3 vertices")
    total_weight = sum(w for _, _, w in graph.edges)
    # (-C) off-diagonal: C_ij = -w/4 for edges, so the emitted cost is +w/4
    cost = SymMatrix.from_entries(n, [(i, j, w / 4.0) for i, j, w in graph.edges])
    constraints = [{0: SymMatrix.from_entries(n, [(i, i, 1.0)])} for i in range(n)]
    rhs = [1.0] * n
    m_eq = n
    if with_triangles:
        signs = ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    for s_ij, s_ik, s_jk in signs:
                        mat = SymMatrix.from_entries(
                            n, [(i, j, s_ij * 0.5), (i, k, s_ik * 0.5), (j, k, s_jk * 0.5)]
                        )
                        constraints.append({0: mat})
                        rhs.append(-1.0)
    problem = SdpProblem.build((n,), [cost], constraints, rhs, ineq_start=m_eq + 1)
    validate(problem)
    return GeneratedInstance(problem, family="maxcut", sense=-1, offset=total_weight / 2.0)


def theta_relaxation(graph: Graph, strengthened: bool = False) -> GeneratedInstance:
    """Stability-number SDP bound (maximize <J, X>, trace 1, zeros on edges);
    strengthened adds entrywise nonnegativity off the edges."""
    n = graph.n
    cost = SymMatrix.from_entries(n, [(i, j, -1.0) for i in range(n) for j in range(i, n)])
    constraints = []
    rhs = []
    for i, j, _ in graph.edges:
        constraints.append({0: SymMatrix.from_entries(n, [(i, j, 0.5)])})
        rhs.append(0.0)
    constraints.append({0: SymMatrix.from_entries(n, [(i, i, 1.0) for i in range(n)])})
    rhs.append(1.0)
    m_eq = len(constraints)
    if strengthened:
        edge_set = graph.edge_set()
        for i in range(n):
            for j in range(i + 1, n):
                if (i, j) not in edge_set:
                    constraints.append({0: SymMatrix.from_entries(n, [(i, j, 0.5)])})
                    rhs.append(0.0)
    problem = SdpProblem.build((n,), [cost], constraints, rhs, ineq_start=m_eq + 1)
    validate(problem)
    return GeneratedInstance(problem, family="theta", sense=-1, offset=0.0)
