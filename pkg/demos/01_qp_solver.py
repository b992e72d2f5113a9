"""Solve a few small quadratic programs and inspect the primal-dual output.

The solver handles equality constraints, two-sided inequality rows, variable
pins, and reports KKT residuals so you can check optimality yourself.
"""

import numpy as np

from qprl import QpProblem, kkt_residual, project_psd, solve_qp

# --- a hand-checkable 2-variable QP ---------------------------------------
# minimize (z0 - 1)^2 + (z1 + 2)^2 subject to z0 + z1 = 0, -0.5 <= z0 <= 0.5.
prob = QpProblem(
    H=2 * np.eye(2),
    q=np.array([-2.0, 4.0]),
    C=np.array([[1.0, 1.0]]),
    b=np.array([0.0]),
    G=np.array([[1.0, 0.0]]),
    lb=np.array([-0.5]),
    ub=np.array([0.5]),
)
sol = solve_qp(prob)
print("status:", sol.status)
print("z* =", sol.z, " (unconstrained optimum is [1, -2])")
print("objective =", sol.objective)
print("equality multiplier =", sol.eq_multipliers)
print("KKT residual =", kkt_residual(prob, sol))

# --- pins fix individual coordinates ---------------------------------------
# Pinning z0 = 0.3 is how the value function conditions its QP on the
# current state (and, for Q-values, the chosen action).
pinned = QpProblem(H=2 * np.eye(2), q=np.array([-2.0, 4.0]),
                   fixed=[(0, 0.3)])
sol = solve_qp(pinned)
print("\npinned z0=0.3 ->", sol.z, "dual of the pin:", sol.eq_multipliers)

# --- a larger random strictly convex QP ------------------------------------
rng = np.random.default_rng(0)
n, m, l = 30, 5, 20
M = rng.normal(size=(n, n))
prob = QpProblem(
    H=M @ M.T + n * np.eye(n),
    q=rng.normal(size=n),
    C=rng.normal(size=(m, n)),
    b=rng.normal(size=m),
    G=rng.normal(size=(l, n)),
    lb=-np.abs(rng.normal(size=l)) - 1,
    ub=np.abs(rng.normal(size=l)) + 1,
)
sol = solve_qp(prob)
print(f"\nrandom QP (n={n}): status={sol.status}, "
      f"iters={sol.iterations}, KKT residual={kkt_residual(prob, sol):.2e}")

# --- PSD projection ----------------------------------------------------------
# Cost blocks must stay positive semidefinite; project_psd clips eigenvalues.
S = np.array([[1.0, 2.0], [2.0, 1.0]])       # eigenvalues 3 and -1
print("\nproject_psd:\n", project_psd(S))
print("with floor 0.1:\n", project_psd(S, floor=0.1))
