"""Evaluate the QP-based value function on the point-mass task.

V(s) is the optimal value of a multistage QP with the first state pinned to
s; Q(s, a) additionally pins the first action. The policy is the first-stage
action of the V-solve. The gradient of Q with respect to every trainable
parameter comes from the QP's primal-dual solution in closed form.
"""

import numpy as np

from qprl import env_pointmass as pm
from qprl import build_banded_c, evaluate_q, evaluate_v, grad_q_theta, policy
from qprl.presets import make_pointmass_theta

band = build_banded_c(pm.TRUE_A, pm.TRUE_B, 10)
theta = make_pointmass_theta(band, np.diag(pm.COST_W), offset=0.0)
print("decision vector size:", theta.layout.z_dim)
print("trainable parameters:", theta.flat_size)

s = np.array([1.0, -0.5, 0.0, 0.0])
v, _ = evaluate_v(theta, s)
a = policy(theta, s)
print(f"\nV({s}) = {v:.4f}")
print("policy action:", a)

# Bellman consistency: Q at the greedy action equals V, and no action does
# better than the greedy one.
q_star, _ = evaluate_q(theta, s, a)
print(f"Q(s, policy(s)) = {q_star:.4f}   |V - Q| = {abs(v - q_star):.2e}")
for trial in range(3):
    rng = np.random.default_rng(trial)
    a_rand = rng.uniform(pm.ACTION_LB, pm.ACTION_UB)
    q, _ = evaluate_q(theta, s, a_rand)
    print(f"Q(s, {np.round(a_rand, 3)}) = {q:.4f}  (>= V)")

# The parameter gradient matches finite differences.
a0 = np.array([0.2, -0.1])
q0, sol = evaluate_q(theta, s, a0)
g = grad_q_theta(theta, s, a0, sol)
flat = theta.flatten()
i = np.argmax(np.abs(g.flat))
h = 1e-6
bumped = flat.copy()
bumped[i] += h
qp, _ = evaluate_q(theta.with_flat(bumped), s, a0)
bumped[i] -= 2 * h
qm, _ = evaluate_q(theta.with_flat(bumped), s, a0)
fd = (qp - qm) / (2 * h)
print(f"\nlargest gradient coordinate {i}: analytic {g.flat[i]:.6f}, "
      f"finite difference {fd:.6f}")
