"""Index layout of the stacked decision vector z = [x0; u0; ...; x_N].

One action per stage is interleaved with the states so that the banded
dynamics matrix [A B -I] per block row is dimensionally exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DecisionLayout:
    n_x: int
    n_u: int
    N: int

    def __post_init__(self):
        if self.n_x < 1 or self.n_u < 1 or self.N < 1:
            raise ValueError("n_x, n_u and N must all be >= 1")

    @property
    def stage_dim(self) -> int:
        return self.n_x + self.n_u

    @property
    def z_dim(self) -> int:
        return self.stage_dim * self.N + self.n_x

    @property
    def n_eq(self) -> int:
        """Rows of the dynamics constraint matrix."""
        return self.n_x * self.N

    def state_slice(self, k: int) -> slice:
        if not 0 <= k <= self.N:
            raise IndexError(f"state index {k} outside 0..{self.N}")
        start = k * self.stage_dim
        return slice(start, start + self.n_x)

    def action_slice(self, k: int) -> slice:
        if not 0 <= k < self.N:
            raise IndexError(f"action index {k} outside 0..{self.N - 1}")
        start = k * self.stage_dim + self.n_x
        return slice(start, start + self.n_u)

    def stage_slice(self, k: int) -> slice:
        """Columns of [x_k; u_k] for k < N."""
        start = k * self.stage_dim
        return slice(start, start + self.stage_dim)

    def stage_of_coord(self) -> np.ndarray:
        """Stage index of every z coordinate (terminal state maps to N)."""
        out = np.empty(self.z_dim, dtype=int)
        for k in range(self.N):
            out[self.stage_slice(k)] = k
        out[self.state_slice(self.N)] = self.N
        return out

    def pack_trajectory(self, states, actions) -> np.ndarray:
        """Stack N+1 states and N actions into the z ordering."""
        states = [np.asarray(s, dtype=float).ravel() for s in states]
        actions = [np.asarray(a, dtype=float).ravel() for a in actions]
        if len(states) != self.N + 1 or len(actions) != self.N:
            raise ValueError("need N+1 states and N actions")
        z = np.empty(self.z_dim)
        for k in range(self.N):
            z[self.state_slice(k)] = states[k]
            z[self.action_slice(k)] = actions[k]
        z[self.state_slice(self.N)] = states[self.N]
        return z
