"""Point-mass environment: double-integrator-like linear dynamics with
velocity damping, quadratic state cost and box bounds.

State s = [x, y, vx, vy], action a = [Fx, Fy]. Noise is either fresh
Gaussian per step or Brownian (accumulated Gaussian increments, reset at
episode start).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TRUE_A = np.array([
    [1.0, 0.0, 0.1, 0.0],
    [0.0, 1.0, 0.0, 0.1],
    [0.0, 0.0, 0.9, 0.0],
    [0.0, 0.0, 0.0, 0.9],
])
TRUE_B = np.array([
    [0.0, 0.0],
    [0.0, 0.0],
    [0.1, 0.0],
    [0.0, 0.1],
])
COST_W = np.diag([3.0, 3.0, 0.25, 0.25])
STATE_LB = np.array([-2.0, -2.0, -10.0, -10.0])
STATE_UB = np.array([2.0, 2.0, 10.0, 10.0])
ACTION_LB = np.array([-1.0, -1.0])
ACTION_UB = np.array([1.0, 1.0])
GAMMA = 0.9

# Step-noise magnitudes; the task description leaves them open.
GAUSSIAN_SIGMA = np.array([0.01, 0.01, 0.05, 0.05])
BROWNIAN_SIGMA = np.array([0.005, 0.005, 0.02, 0.02])


@dataclass
class NoiseModel:
    """Per-step disturbance: none, fresh Gaussian, or Brownian."""

    kind: str = "none"
    sigma: np.ndarray | None = None
    _brownian_state: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "brownian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma is None:
            self.sigma = {
                "none": np.zeros(4),
                "gaussian": GAUSSIAN_SIGMA,
                "brownian": BROWNIAN_SIGMA,
            }[self.kind]
        self.sigma = np.asarray(self.sigma, dtype=float)
        self._brownian_state = np.zeros_like(self.sigma)

    def reset(self):
        self._brownian_state = np.zeros_like(self.sigma)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "none":
            return np.zeros_like(self.sigma)
        inc = rng.normal(size=self.sigma.shape) * self.sigma
        if self.kind == "gaussian":
            return inc
        self._brownian_state = self._brownian_state + inc
        return self._brownian_state.copy()


@dataclass
class PointMassParams:
    A: np.ndarray = field(default_factory=lambda: TRUE_A.copy())
    B: np.ndarray = field(default_factory=lambda: TRUE_B.copy())
    W: np.ndarray = field(default_factory=lambda: COST_W.copy())
    gamma: float = GAMMA
    lb_s: np.ndarray = field(default_factory=lambda: STATE_LB.copy())
    ub_s: np.ndarray = field(default_factory=lambda: STATE_UB.copy())
    lb_a: np.ndarray = field(default_factory=lambda: ACTION_LB.copy())
    ub_a: np.ndarray = field(default_factory=lambda: ACTION_UB.copy())


def corrupt_model(A, B, delta: float, rng: np.random.Generator):
    """Add entrywise uniform [-delta, delta] perturbations to (A, B)."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    dA = rng.uniform(-delta, delta, size=A.shape)
    dB = rng.uniform(-delta, delta, size=B.shape)
    return A + dA, B + dB


class PointMassEnv:
    """One instance per rollout worker; owns its noise state."""

    def __init__(self, params: PointMassParams | None = None,
                 noise: NoiseModel | None = None):
        self.params = params if params is not None else PointMassParams()
        self.noise = noise if noise is not None else NoiseModel("none")
        self.state = np.zeros(4)

    @property
    def n_x(self):
        return self.params.A.shape[0]

    @property
    def n_u(self):
        return self.params.B.shape[1]

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        """Positions uniform in [-1.5, 1.5]^2, velocities zero."""
        pos = rng.uniform(-1.5, 1.5, size=2)
        self.state = np.array([pos[0], pos[1], 0.0, 0.0])
        self.noise.reset()
        return self.state.copy()

    def step(self, action, rng: np.random.Generator):
        """Advance one step; returns (next_state, cost).

        The stage cost s'Ws is charged at the pre-transition state; the
        next state is clipped to the state box so episodes keep a fixed
        length.
        """
        p = self.params
        s = np.asarray(self.state, dtype=float)
        a = np.clip(np.asarray(action, dtype=float), p.lb_a, p.ub_a)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a))):
            raise ValueError("non-finite state or action")
        cost = float(s @ p.W @ s)
        nu = self.noise.sample(rng)
        s_next = p.A @ s + p.B @ a + nu
        s_next = np.clip(s_next, p.lb_s, p.ub_s)
        self.state = s_next
        return s_next.copy(), cost
