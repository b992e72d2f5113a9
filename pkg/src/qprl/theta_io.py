"""Flat text serialization of theta snapshots.

Layout: a header line ``n_x n_u N gamma`` followed by named sections
(STAGE_COST k, TERMINAL_COST, OFFSET, EQ_MATRIX, BOUNDS, SLACK_W), all
values printed with 17 significant digits so doubles round-trip exactly.
Linear cost terms are zero in this parameterization and are not stored.
"""

from __future__ import annotations

import numpy as np

from qprl.approximator import ThetaMask, ThetaParams
from qprl.layout import DecisionLayout


def _fmt(v: float) -> str:
    return f"{v:.16e}"


def _fmt_row(row) -> str:
    return " ".join(_fmt(v) for v in np.asarray(row, dtype=float).ravel())


def save_theta(theta: ThetaParams, path) -> None:
    lay = theta.layout
    lines = [f"{lay.n_x} {lay.n_u} {lay.N} {_fmt(theta.discount)}"]
    for k in range(lay.N):
        lines.append(f"STAGE_COST {k}")
        lines.extend(_fmt_row(r) for r in theta.stage_cost_blocks[k])
    lines.append("TERMINAL_COST")
    lines.extend(_fmt_row(r) for r in theta.terminal_cost)
    lines.append("OFFSET")
    lines.append(_fmt(theta.offset))
    lines.append("EQ_MATRIX")
    lines.extend(_fmt_row(r) for r in theta.eq_matrix)
    lines.append("BOUNDS")
    lines.append(_fmt_row(theta.lb))
    lines.append(_fmt_row(theta.ub))
    lines.append("SLACK_W")
    lines.append(_fmt_row(theta.slack_weights))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_theta(path, trainable_mask: ThetaMask | None = None) -> ThetaParams:
    """Rebuild theta from a snapshot file.

    The snapshot stores the identity inequality structure implicitly; the
    trainable mask is not persisted and defaults to all-frozen unless
    passed in.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    n_x, n_u, N = int(head[0]), int(head[1]), int(head[2])
    gamma = float(head[3])
    lay = DecisionLayout(n_x, n_u, N)
    d = lay.stage_dim

    pos = 1

    def take_matrix(rows):
        nonlocal pos
        M = np.array([[float(v) for v in lines[pos + r].split()] for r in range(rows)])
        pos += rows
        return M

    blocks = np.zeros((N, d, d))
    for k in range(N):
        if lines[pos] != f"STAGE_COST {k}":
            raise ValueError(f"expected 'STAGE_COST {k}', got {lines[pos]!r}")
        pos += 1
        blocks[k] = take_matrix(d)
    if lines[pos] != "TERMINAL_COST":
        raise ValueError(f"expected 'TERMINAL_COST', got {lines[pos]!r}")
    pos += 1
    terminal = take_matrix(n_x)
    if lines[pos] != "OFFSET":
        raise ValueError(f"expected 'OFFSET', got {lines[pos]!r}")
    pos += 1
    offset = float(lines[pos])
    pos += 1
    if lines[pos] != "EQ_MATRIX":
        raise ValueError(f"expected 'EQ_MATRIX', got {lines[pos]!r}")
    pos += 1
    eq = take_matrix(lay.n_eq)
    if lines[pos] != "BOUNDS":
        raise ValueError(f"expected 'BOUNDS', got {lines[pos]!r}")
    pos += 1
    lb = np.array([float(v) for v in lines[pos].split()])
    ub = np.array([float(v) for v in lines[pos + 1].split()])
    pos += 2
    if lines[pos] != "SLACK_W":
        raise ValueError(f"expected 'SLACK_W', got {lines[pos]!r}")
    pos += 1
    w = np.array([float(v) for v in lines[pos].split()])

    return ThetaParams(
        layout=lay,
        stage_cost_blocks=blocks,
        terminal_cost=terminal,
        linear_cost_blocks=np.zeros((N, d)),
        terminal_linear=np.zeros(n_x),
        offset=offset,
        eq_matrix=eq,
        ineq_matrix=np.eye(lay.z_dim),
        lb=lb,
        ub=ub,
        slack_weights=w,
        discount=gamma,
        trainable_mask=trainable_mask,
    )
