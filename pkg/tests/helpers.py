"""Shared test utilities: random problem builders and independent dense oracles.

The oracles here deliberately work on dense numpy matrices and straight
formula transcriptions, independent of the package's sparse kernels.
"""

import numpy as np

from sdpmix.problem import SdpProblem, SymMatrix


def random_symmatrix(rng, n, density=0.6, ensure_nonzero=True):
    entries = []
    for r in range(n):
        for c in range(r, n):
            if rng.random() < density:
                entries.append((r, c, rng.uniform(-1.0, 1.0)))
    if ensure_nonzero and not entries:
        entries.append((0, min(1, n - 1), rng.uniform(0.5, 1.0)))
    return SymMatrix.from_entries(n, entries)


def random_problem(seed, block_sizes=(4,), m_eq=3, m_ineq=0, density=0.6):
    """A random well-formed SDP; every constraint touches every block."""
    rng = np.random.default_rng(seed)
    block_sizes = tuple(block_sizes)
    costs = [random_symmatrix(rng, n, density) for n in block_sizes]
    constraints = []
    m = m_eq + m_ineq
    for _ in range(m):
        constraints.append({b: random_symmatrix(rng, n, density) for b, n in enumerate(block_sizes)})
    rhs = rng.uniform(-1.0, 1.0, size=m)
    return SdpProblem.build(block_sizes, costs, constraints, rhs, ineq_start=m_eq + 1)


def ceil_sqrt(x: int) -> int:
    import math

    s = math.isqrt(x)
    return s if s * s == x else s + 1


def random_V_blocks(rng, problem, k=None):
    out = []
    for n in problem.block_sizes:
        ki = k if k is not None else min(n, ceil_sqrt(2 * problem.m))
        out.append(rng.standard_normal((ki, n)))
    return out


def dense_cost(problem):
    return [c.to_dense() for c in problem.costs]


def dense_constraint(problem, j):
    """Per-block dense matrices of constraint j (zeros where absent)."""
    mats = [np.zeros((n, n)) for n in problem.block_sizes]
    for b, mat in problem.constraints[j]:
        mats[b] = mat.to_dense()
    return mats


def dense_apply_oracle(problem, X_blocks):
    """<A_j, X> summed over blocks, via dense matrices."""
    out = np.zeros(problem.m)
    for j in range(problem.m):
        for b, mat in problem.constraints[j]:
            out[j] += np.tensordot(mat.to_dense(), X_blocks[b])
    return out


def dense_adjoint_oracle(problem, y):
    """sum_j y_j A_j per block, via dense matrices."""
    out = [np.zeros((n, n)) for n in problem.block_sizes]
    for j in range(problem.m):
        for b, mat in problem.constraints[j]:
            out[b] += y[j] * mat.to_dense()
    return out


def gram_blocks(V_blocks):
    return [V.T @ V for V in V_blocks]


def dense_auglag_oracle(problem, V_blocks, y_a, y_b, mu):
    """Augmented Lagrangian value from the hinge formula, dense arithmetic."""
    X = gram_blocks(V_blocks)
    vals = dense_apply_oracle(problem, X)
    obj = sum(np.tensordot(c.to_dense(), X[b]) for b, c in enumerate(problem.costs))
    ma = problem.m_eq
    r = np.asarray(problem.rhs[:ma], dtype=float) - vals[:ma]
    s = np.asarray(problem.rhs[ma:], dtype=float) - vals[ma:]
    total = obj + y_a @ r + 0.5 * mu * (r @ r)
    active = y_b + mu * s > 0
    total += y_b[active] @ s[active] + 0.5 * mu * (s[active] @ s[active])
    total -= (y_b[~active] @ y_b[~active]) / (2.0 * mu)
    return total


def fd_gradient(f, x, h=1e-5):
    """Central finite differences of a scalar function of a flat array."""
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g
