"""Independent reference implementations used to check the library.

Everything here is deliberately naive: exhaustive enumeration, dense
re-solves, double loops. Slow but obviously correct.
"""

from __future__ import annotations

import itertools

import numpy as np

from qprl.approximator import evaluate_q
from qprl.qp_core import QpProblem


def enumerate_qp_minimum(problem: QpProblem, feas_tol: float = 1e-9):
    """Global minimum of a strictly convex QP by active-set enumeration.

    Every subset of the one-sided inequality rows is treated as active
    (held at its bound), the resulting equality-constrained QP is solved by
    a dense KKT solve, and the best candidate feasible for the remaining
    rows is returned as (z, objective). Returns None when no candidate is
    feasible (the problem is infeasible or the enumeration degenerates).
    """
    n = problem.n
    H, q = problem.H, problem.q
    A, b = problem.eq_system()

    sides = []  # (row of G, bound value)
    for i in range(problem.G.shape[0]):
        if np.isfinite(problem.lb[i]):
            sides.append((problem.G[i], problem.lb[i], "lo", i))
        if np.isfinite(problem.ub[i]):
            sides.append((problem.G[i], problem.ub[i], "up", i))

    best = None
    for r in range(len(sides) + 1):
        for combo in itertools.combinations(range(len(sides)), r):
            rows = [A] + [sides[j][0][None, :] for j in combo]
            rhs = np.concatenate([b] + [[sides[j][1]] for j in combo])
            Aa = np.vstack(rows) if len(rows) > 1 or A.shape[0] else np.zeros((0, n))
            m = Aa.shape[0]
            K = np.zeros((n + m, n + m))
            K[:n, :n] = H
            if m:
                K[:n, n:] = Aa.T
                K[n:, :n] = Aa
            try:
                sol = np.linalg.solve(K, np.concatenate([-q, rhs]))
            except np.linalg.LinAlgError:
                continue
            z = sol[:n]
            if not np.all(np.isfinite(z)):
                continue
            gz = problem.G @ z if problem.G.shape[0] else np.zeros(0)
            ok = True
            for i in range(problem.G.shape[0]):
                if np.isfinite(problem.lb[i]) and gz[i] < problem.lb[i] - feas_tol:
                    ok = False
                    break
                if np.isfinite(problem.ub[i]) and gz[i] > problem.ub[i] + feas_tol:
                    ok = False
                    break
            if not ok:
                continue
            if A.shape[0] and np.max(np.abs(A @ z - b)) > feas_tol:
                continue
            obj = problem.objective(z)
            if best is None or obj < best[1]:
                best = (z, obj)
    return best


def dual_objective(problem: QpProblem, sol) -> float:
    """Lagrangian dual value at the solution's multipliers.

    g(y) = min_z L(z, y); the inner minimum is a linear solve because H is
    positive definite on the tested instances.
    """
    A, b = problem.eq_system()
    chi = sol.eq_multipliers
    lo = sol.ineq_multipliers_lower
    up = sol.ineq_multipliers_upper
    grad_lin = problem.q.copy()
    if A.shape[0]:
        grad_lin += A.T @ chi
    if problem.G.shape[0]:
        grad_lin += problem.G.T @ (up - lo)
    z_bar = np.linalg.solve(problem.H + 1e-12 * np.eye(problem.n), -grad_lin)
    val = 0.5 * z_bar @ problem.H @ z_bar + grad_lin @ z_bar + problem.c
    if A.shape[0]:
        val -= chi @ b
    fin_lo = np.isfinite(problem.lb)
    fin_up = np.isfinite(problem.ub)
    val += lo[fin_lo] @ problem.lb[fin_lo]
    val -= up[fin_up] @ problem.ub[fin_up]
    return float(val)


def random_solvable_qp(rng: np.random.Generator, n_max: int = 50, l_max: int | None = None,
                       allow_fixed: bool = True) -> QpProblem:
    """Random strictly convex QP guaranteed feasible via an anchor point."""
    n = int(rng.integers(2, n_max + 1))
    L = rng.normal(size=(n, n))
    H = L @ L.T + (0.1 + rng.uniform()) * np.eye(n)
    q = rng.normal(size=n) * 10 ** rng.uniform(-1, 2)
    z0 = rng.normal(size=n)
    kw = {}
    if rng.uniform() < 0.7:
        m = int(rng.integers(1, max(2, n // 2)))
        C = rng.normal(size=(m, n))
        kw["C"] = C
        kw["b"] = C @ z0
    if rng.uniform() < 0.9:
        l = int(rng.integers(1, (l_max or n + 5) + 1))
        G = rng.normal(size=(l, n))
        v = G @ z0
        lb = v - rng.uniform(0.01, 2, l)
        ub = v + rng.uniform(0.01, 2, l)
        lb[rng.uniform(size=l) < 0.2] = -np.inf
        ub[rng.uniform(size=l) < 0.2] = np.inf
        kw["G"] = G
        kw["lb"] = lb
        kw["ub"] = ub
    if allow_fixed and rng.uniform() < 0.3:
        k = int(rng.integers(0, n))
        kw["fixed"] = [(int(i), float(z0[i]))
                       for i in rng.choice(n, size=k, replace=False)]
    return QpProblem(H=H, q=q, **kw)


def tiny_enumerable_qp(rng: np.random.Generator) -> QpProblem:
    """Small instance (n <= 6, few one-sided rows) for active-set enumeration."""
    n = int(rng.integers(2, 7))
    L = rng.normal(size=(n, n))
    H = L @ L.T + (0.2 + rng.uniform()) * np.eye(n)
    q = rng.normal(size=n)
    z0 = rng.normal(size=n)
    kw = {}
    if rng.uniform() < 0.5:
        m = int(rng.integers(1, 3))
        C = rng.normal(size=(m, n))
        kw["C"] = C
        kw["b"] = C @ z0
    l = int(rng.integers(1, 5))
    G = rng.normal(size=(l, n))
    v = G @ z0
    lb = v - rng.uniform(0.05, 1.5, l)
    ub = v + rng.uniform(0.05, 1.5, l)
    one_sided = rng.uniform(size=l) < 0.4
    lb[one_sided & (rng.uniform(size=l) < 0.5)] = -np.inf
    ub[one_sided & (rng.uniform(size=l) >= 0.5)] = np.inf
    kw["G"] = G
    kw["lb"] = lb
    kw["ub"] = ub
    return QpProblem(H=H, q=q, c=float(rng.normal()), **kw)


def fd_grad_q(theta, s, a, coords, h: float = 1e-6, tol: float = 1e-10) -> np.ndarray:
    """Central finite differences of Q(s, a) over the given flat coords."""
    base = theta.flatten()
    out = np.empty(len(coords))
    for j, i in enumerate(coords):
        vp = base.copy()
        vp[i] += h
        qp_, sp = evaluate_q(theta.with_flat(vp), s, a, tol=tol)
        vm = base.copy()
        vm[i] -= h
        qm_, sm = evaluate_q(theta.with_flat(vm), s, a, tol=tol)
        assert sp.status == "optimal" and sm.status == "optimal"
        out[j] = (qp_ - qm_) / (2 * h)
    return out
