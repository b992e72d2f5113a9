"""Parameterized QP approximators of the value function V and action-value
function Q, the induced policy, and the exact parameter gradient of Q read
off the Lagrangian of the QP at its primal-dual solution.

The decision vector is [x0; u0; ...; x_N] followed by one slack per
inequality row; stage costs carry discount weights baked in at assembly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from qprl.layout import DecisionLayout
from qprl.qp_core import PrimalDualSolution, QpProblem, solve_qp

SOLVE_REG = 1e-9  # strict-convexity regularization, applied at solve only


class SolveStatusError(RuntimeError):
    """Raised when an operation needs an optimal solve but did not get one."""

    def __init__(self, status: str, what: str = "QP solve"):
        super().__init__(f"{what} ended with status {status!r}")
        self.status = status


@dataclass
class ThetaMask:
    """Per-entry booleans marking the flat learnable vector."""

    stage: np.ndarray
    terminal: np.ndarray
    linear: np.ndarray
    terminal_linear: np.ndarray
    offset: bool
    eq: np.ndarray
    slack: np.ndarray

    @classmethod
    def none(cls, layout: DecisionLayout, n_ineq: int) -> "ThetaMask":
        d = layout.stage_dim
        return cls(
            stage=np.zeros((layout.N, d, d), dtype=bool),
            terminal=np.zeros((layout.n_x, layout.n_x), dtype=bool),
            linear=np.zeros((layout.N, d), dtype=bool),
            terminal_linear=np.zeros(layout.n_x, dtype=bool),
            offset=False,
            eq=np.zeros((layout.n_eq, layout.z_dim), dtype=bool),
            slack=np.zeros(n_ineq, dtype=bool),
        )


@dataclass
class ThetaParams:
    """Full parameter set of the QP approximator.

    Stage and terminal cost blocks are stored unweighted; the discount
    weights gamma^k are folded in at assembly. ``eq_matrix`` is the dense
    learned constraint matrix whose banded special case recovers a linear
    MPC scheme. Treated as immutable once built; updates go through
    :meth:`with_flat`.
    """

    layout: DecisionLayout
    stage_cost_blocks: np.ndarray          # (N, d, d), d = n_x + n_u
    terminal_cost: np.ndarray              # (n_x, n_x)
    linear_cost_blocks: np.ndarray         # (N, d)
    terminal_linear: np.ndarray            # (n_x,)
    offset: float
    eq_matrix: np.ndarray                  # (n_x*N, z_dim)
    ineq_matrix: np.ndarray                # (l, z_dim)
    lb: np.ndarray
    ub: np.ndarray
    slack_weights: np.ndarray              # (l,)
    discount: float
    trainable_mask: ThetaMask | None = None
    _flat_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        lay = self.layout
        d = lay.stage_dim
        self.stage_cost_blocks = np.asarray(self.stage_cost_blocks, dtype=float)
        self.terminal_cost = np.asarray(self.terminal_cost, dtype=float)
        self.linear_cost_blocks = np.asarray(self.linear_cost_blocks, dtype=float)
        self.terminal_linear = np.asarray(self.terminal_linear, dtype=float)
        self.eq_matrix = np.asarray(self.eq_matrix, dtype=float)
        self.ineq_matrix = np.asarray(self.ineq_matrix, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.slack_weights = np.asarray(self.slack_weights, dtype=float)
        self.offset = float(self.offset)

        if self.stage_cost_blocks.shape != (lay.N, d, d):
            raise ValueError("stage_cost_blocks shape mismatch")
        if self.terminal_cost.shape != (lay.n_x, lay.n_x):
            raise ValueError("terminal_cost shape mismatch")
        if self.linear_cost_blocks.shape != (lay.N, d):
            raise ValueError("linear_cost_blocks shape mismatch")
        if self.terminal_linear.shape != (lay.n_x,):
            raise ValueError("terminal_linear shape mismatch")
        if self.eq_matrix.shape != (lay.n_eq, lay.z_dim):
            raise ValueError("eq_matrix shape mismatch")
        if self.ineq_matrix.shape[1] != lay.z_dim:
            raise ValueError("ineq_matrix column count mismatch")
        l = self.ineq_matrix.shape[0]
        if self.lb.shape != (l,) or self.ub.shape != (l,) or self.slack_weights.shape != (l,):
            raise ValueError("bounds/slack_weights length mismatch")
        if np.any(self.slack_weights < 0):
            raise ValueError("slack weights must be nonnegative")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")

        for k in range(lay.N):
            blk = self.stage_cost_blocks[k]
            if np.max(np.abs(blk - blk.T), initial=0.0) > 1e-10:
                raise ValueError(f"stage cost block {k} is not symmetric")
            self.stage_cost_blocks[k] = 0.5 * (blk + blk.T)
        tc = self.terminal_cost
        if np.max(np.abs(tc - tc.T), initial=0.0) > 1e-10:
            raise ValueError("terminal cost is not symmetric")
        self.terminal_cost = 0.5 * (tc + tc.T)

        if self.trainable_mask is None:
            self.trainable_mask = ThetaMask.none(lay, l)

    # -- flat parameter vector ------------------------------------------

    @property
    def n_ineq(self):
        return self.ineq_matrix.shape[0]

    def _index(self):
        """Cached flat-coordinate index arrays, one tuple per group."""
        if self._flat_index is not None:
            return self._flat_index
        m = self.trainable_mask
        lay = self.layout
        d = lay.stage_dim
        upper = np.triu(np.ones((d, d), dtype=bool))
        sk, si, sj = np.nonzero(m.stage & upper[None, :, :])
        upper_x = np.triu(np.ones((lay.n_x, lay.n_x), dtype=bool))
        ti, tj = np.nonzero(m.terminal & upper_x)
        lk, li = np.nonzero(m.linear)
        tli = np.nonzero(m.terminal_linear)[0]
        er, ec = np.nonzero(m.eq)
        wi = np.nonzero(m.slack)[0]
        sizes = [len(sk), len(ti), len(lk), len(tli), int(bool(m.offset)), len(er), len(wi)]
        offs = np.concatenate([[0], np.cumsum(sizes)])
        self._flat_index = {
            "stage": (sk, si, sj), "terminal": (ti, tj), "linear": (lk, li),
            "terminal_linear": tli, "offset": bool(m.offset), "eq": (er, ec),
            "slack": wi, "offsets": offs, "size": int(offs[-1]),
        }
        return self._flat_index

    @property
    def flat_size(self) -> int:
        return self._index()["size"]

    def group_slices(self) -> dict:
        """Flat-vector slice per parameter group."""
        ix = self._index()
        o = ix["offsets"]
        names = ["stage", "terminal", "linear", "terminal_linear", "offset", "eq", "slack"]
        return {name: slice(int(o[i]), int(o[i + 1])) for i, name in enumerate(names)}

    def flatten(self) -> np.ndarray:
        ix = self._index()
        sk, si, sj = ix["stage"]
        ti, tj = ix["terminal"]
        lk, li = ix["linear"]
        er, ec = ix["eq"]
        parts = [
            self.stage_cost_blocks[sk, si, sj],
            self.terminal_cost[ti, tj],
            self.linear_cost_blocks[lk, li],
            self.terminal_linear[ix["terminal_linear"]],
            np.array([self.offset]) if ix["offset"] else np.zeros(0),
            self.eq_matrix[er, ec],
            self.slack_weights[ix["slack"]],
        ]
        return np.concatenate(parts)

    def with_flat(self, vec: np.ndarray) -> "ThetaParams":
        """New ThetaParams with trainable entries replaced by ``vec``."""
        vec = np.asarray(vec, dtype=float).ravel()
        ix = self._index()
        if vec.size != ix["size"]:
            raise ValueError(f"flat vector length {vec.size} != {ix['size']}")
        sl = self.group_slices()
        stage = self.stage_cost_blocks.copy()
        sk, si, sj = ix["stage"]
        stage[sk, si, sj] = vec[sl["stage"]]
        stage[sk, sj, si] = vec[sl["stage"]]
        terminal = self.terminal_cost.copy()
        ti, tj = ix["terminal"]
        terminal[ti, tj] = vec[sl["terminal"]]
        terminal[tj, ti] = vec[sl["terminal"]]
        linear = self.linear_cost_blocks.copy()
        lk, li = ix["linear"]
        linear[lk, li] = vec[sl["linear"]]
        tl = self.terminal_linear.copy()
        tl[ix["terminal_linear"]] = vec[sl["terminal_linear"]]
        offset = float(vec[sl["offset"]][0]) if ix["offset"] else self.offset
        eq = self.eq_matrix.copy()
        er, ec = ix["eq"]
        eq[er, ec] = vec[sl["eq"]]
        w = self.slack_weights.copy()
        w[ix["slack"]] = vec[sl["slack"]]
        return replace(self, stage_cost_blocks=stage, terminal_cost=terminal,
                       linear_cost_blocks=linear, terminal_linear=tl, offset=offset,
                       eq_matrix=eq, slack_weights=w, _flat_index=None)

    # -- assembly helpers ------------------------------------------------

    def discount_stage_weights(self) -> np.ndarray:
        return self.discount ** np.arange(self.layout.N + 1)

    def effective_slack_weights(self) -> np.ndarray:
        """Slack weights with discount folded in when rows map to z coords."""
        if self.n_ineq == self.layout.z_dim:
            stage = self.layout.stage_of_coord()
            return (self.discount ** stage) * self.slack_weights
        return self.slack_weights.copy()


def assemble_value_qp(theta: ThetaParams, s) -> QpProblem:
    """QP whose optimal value approximates V(s); x0 is pinned to s."""
    return _assemble(theta, s, a=None)


def assemble_action_value_qp(theta: ThetaParams, s, a) -> QpProblem:
    """QP whose optimal value approximates Q(s, a); pins x0 = s, u0 = a."""
    if a is None:
        raise ValueError("action required")
    return _assemble(theta, s, a=a)


def _assemble(theta: ThetaParams, s, a) -> QpProblem:
    lay = theta.layout
    s = np.asarray(s, dtype=float).ravel()
    if s.size != lay.n_x:
        raise ValueError(f"state dimension {s.size} != {lay.n_x}")
    if a is not None:
        a = np.asarray(a, dtype=float).ravel()
        if a.size != lay.n_u:
            raise ValueError(f"action dimension {a.size} != {lay.n_u}")

    nz = lay.z_dim
    l = theta.n_ineq
    nvar = nz + l
    gw = theta.discount_stage_weights()

    H = np.zeros((nvar, nvar))
    q = np.zeros(nvar)
    for k in range(lay.N):
        sl = lay.stage_slice(k)
        H[sl, sl] = gw[k] * theta.stage_cost_blocks[k]
        q[sl] = gw[k] * theta.linear_cost_blocks[k]
    slN = lay.state_slice(lay.N)
    H[slN, slN] = gw[lay.N] * theta.terminal_cost
    q[slN] = gw[lay.N] * theta.terminal_linear
    H[np.arange(nvar), np.arange(nvar)] += SOLVE_REG
    q[nz:] = theta.effective_slack_weights()

    C = np.zeros((lay.n_eq, nvar))
    C[:, :nz] = theta.eq_matrix
    b = np.zeros(lay.n_eq)

    # lb - sigma <= Gz <= ub + sigma, sigma >= 0, as one-sided rows.
    G = np.zeros((3 * l, nvar))
    lb = np.empty(3 * l)
    ub = np.empty(3 * l)
    G[:l, :nz] = theta.ineq_matrix
    G[np.arange(l), nz + np.arange(l)] = 1.0
    lb[:l] = theta.lb
    ub[:l] = np.inf
    G[l:2 * l, :nz] = theta.ineq_matrix
    G[l + np.arange(l), nz + np.arange(l)] = -1.0
    lb[l:2 * l] = -np.inf
    ub[l:2 * l] = theta.ub
    G[2 * l + np.arange(l), nz + np.arange(l)] = 1.0
    lb[2 * l:] = 0.0
    ub[2 * l:] = np.inf

    fixed = [(lay.state_slice(0).start + i, float(s[i])) for i in range(lay.n_x)]
    if a is not None:
        fixed += [(lay.action_slice(0).start + i, float(a[i])) for i in range(lay.n_u)]

    return QpProblem(H=H, q=q, c=theta.offset, C=C, b=b, G=G, lb=lb, ub=ub, fixed=fixed)


def _fill_slack_multipliers(theta: ThetaParams, sol: PrimalDualSolution) -> PrimalDualSolution:
    l = theta.n_ineq
    sol.bound_multipliers_slack = sol.ineq_multipliers_lower[2 * l:3 * l].copy()
    return sol


def evaluate_v(theta: ThetaParams, s, tol: float = 1e-8, max_iter: int = 100):
    """Value estimate V(s); returns (value, primal-dual solution)."""
    sol = solve_qp(assemble_value_qp(theta, s), tol=tol, max_iter=max_iter)
    return sol.objective, _fill_slack_multipliers(theta, sol)


def evaluate_q(theta: ThetaParams, s, a, tol: float = 1e-8, max_iter: int = 100):
    """Action-value estimate Q(s, a); returns (value, solution)."""
    sol = solve_qp(assemble_action_value_qp(theta, s, a), tol=tol, max_iter=max_iter)
    return sol.objective, _fill_slack_multipliers(theta, sol)


def policy(theta: ThetaParams, s, tol: float = 1e-8, max_iter: int = 100) -> np.ndarray:
    """Greedy action: the u0 slice of the V(s) primal solution."""
    value, sol = evaluate_v(theta, s, tol=tol, max_iter=max_iter)
    if sol.status != "optimal":
        raise SolveStatusError(sol.status, "policy evaluation")
    return sol.z[theta.layout.action_slice(0)].copy()


@dataclass
class ThetaGradient:
    """Gradient of Q with respect to theta at a fixed primal-dual solution.

    ``flat`` covers trainable entries in flat order; ``fields`` holds the
    dense per-field gradients (all entries, trainable or not).
    """

    flat: np.ndarray
    fields: dict
    reliable: bool


def grad_q_theta(theta: ThetaParams, s, a, solution: PrimalDualSolution,
                 kkt_tol: float = 1e-7) -> ThetaGradient:
    """Parameter gradient of Q(s, a) via the Lagrangian at the solution.

    Cost blocks pick up discount-weighted quadratic terms of the primal,
    the offset contributes 1, constraint-matrix entries pick up
    multiplier-times-primal products.
    """
    if solution.status != "optimal":
        raise SolveStatusError(solution.status, "gradient evaluation")
    if solution.kkt_residual > kkt_tol:
        raise ValueError(
            f"solution KKT residual {solution.kkt_residual:.3e} exceeds {kkt_tol:.1e}")

    lay = theta.layout
    nz = lay.z_dim
    l = theta.n_ineq
    z = solution.z[:nz]
    sigma = solution.z[nz:]
    gw = theta.discount_stage_weights()

    chi = solution.eq_multipliers[:lay.n_eq]
    ups = solution.ineq_multipliers_lower[:l]        # lower side of Gz
    eta = solution.ineq_multipliers_upper[l:2 * l]   # upper side of Gz

    d = lay.stage_dim
    g_stage = np.empty((lay.N, d, d))
    g_linear = np.empty((lay.N, d))
    for k in range(lay.N):
        zs = z[lay.stage_slice(k)]
        outer = np.outer(zs, zs)
        # Combined derivative for tied symmetric entries: off-diagonal
        # entries act twice, diagonal once with the 1/2 cost factor.
        g_stage[k] = gw[k] * (outer - 0.5 * np.diag(np.diag(outer)))
        g_linear[k] = gw[k] * zs
    xN = z[lay.state_slice(lay.N)]
    outN = np.outer(xN, xN)
    g_terminal = gw[lay.N] * (outN - 0.5 * np.diag(np.diag(outN)))
    g_tl = gw[lay.N] * xN

    g_eq = np.outer(chi, z)
    g_ineq = np.outer(eta - ups, z)
    if theta.n_ineq == lay.z_dim:
        g_slack = (theta.discount ** lay.stage_of_coord()) * sigma
    else:
        g_slack = sigma.copy()

    fields = {
        "stage": g_stage, "terminal": g_terminal, "linear": g_linear,
        "terminal_linear": g_tl, "offset": 1.0, "eq": g_eq,
        "ineq": g_ineq, "slack": g_slack,
    }

    ix = theta._index()
    sk, si, sj = ix["stage"]
    ti, tj = ix["terminal"]
    lk, li = ix["linear"]
    er, ec = ix["eq"]
    flat = np.concatenate([
        g_stage[sk, si, sj],
        g_terminal[ti, tj],
        g_linear[lk, li],
        g_tl[ix["terminal_linear"]],
        np.array([1.0]) if ix["offset"] else np.zeros(0),
        g_eq[er, ec],
        g_slack[ix["slack"]],
    ])
    return ThetaGradient(flat=flat, fields=fields,
                         reliable=not solution.degenerate_multipliers)
