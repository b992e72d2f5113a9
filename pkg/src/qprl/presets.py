"""Ready-made parameterizations for the point-mass task.

The experiment parameterization keeps the diagonal state weights of the
first stage cost block and the scalar offset trainable, learns every entry
of the constraint matrix (unless frozen), and fixes the terminal cost to
identity, linear costs to zero and the inequality matrix to identity over
the decision vector with the task's state/action boxes.
"""

from __future__ import annotations

import numpy as np

from qprl import env_pointmass as pm
from qprl.approximator import ThetaMask, ThetaParams
from qprl.layout import DecisionLayout
from qprl.mpc_structure import BandedReference

DEFAULT_SLACK_WEIGHT = 100.0


def pointmass_bounds(layout: DecisionLayout):
    """Per-coordinate bounds of z for identity inequality structure."""
    lb = np.empty(layout.z_dim)
    ub = np.empty(layout.z_dim)
    for k in range(layout.N):
        lb[layout.state_slice(k)] = pm.STATE_LB
        ub[layout.state_slice(k)] = pm.STATE_UB
        lb[layout.action_slice(k)] = pm.ACTION_LB
        ub[layout.action_slice(k)] = pm.ACTION_UB
    lb[layout.state_slice(layout.N)] = pm.STATE_LB
    ub[layout.state_slice(layout.N)] = pm.STATE_UB
    return lb, ub


def pointmass_mask(layout: DecisionLayout, train_constraints: bool = True) -> ThetaMask:
    mask = ThetaMask.none(layout, layout.z_dim)
    idx = np.arange(layout.n_x)
    mask.stage[0, idx, idx] = True
    mask.offset = True
    if train_constraints:
        mask.eq[:, :] = True
    return mask


def make_pointmass_theta(band: BandedReference,
                         stage_diag,
                         offset: float,
                         gamma: float = pm.GAMMA,
                         slack_weight: float = DEFAULT_SLACK_WEIGHT,
                         train_constraints: bool = True) -> ThetaParams:
    """Theta with stage blocks diag(stage_diag, 0..), terminal identity,
    constraint matrix initialized to the banded reference."""
    lay = band.layout
    d = lay.stage_dim
    stage_diag = np.asarray(stage_diag, dtype=float).ravel()
    if stage_diag.size != lay.n_x:
        raise ValueError("stage_diag must have one entry per state dim")
    block = np.zeros((d, d))
    block[np.arange(lay.n_x), np.arange(lay.n_x)] = stage_diag
    blocks = np.repeat(block[None, :, :], lay.N, axis=0)
    lb, ub = pointmass_bounds(lay)
    return ThetaParams(
        layout=lay,
        stage_cost_blocks=blocks,
        terminal_cost=np.eye(lay.n_x),
        linear_cost_blocks=np.zeros((lay.N, d)),
        terminal_linear=np.zeros(lay.n_x),
        offset=float(offset),
        eq_matrix=band.C0.copy(),
        ineq_matrix=np.eye(lay.z_dim),
        lb=lb,
        ub=ub,
        slack_weights=np.full(lay.z_dim, float(slack_weight)),
        discount=gamma,
        trainable_mask=pointmass_mask(lay, train_constraints),
    )


def random_pointmass_theta(band: BandedReference, rng: np.random.Generator,
                           gamma: float = pm.GAMMA,
                           train_constraints: bool = True) -> ThetaParams:
    """Random initialization of the trainable cost entries."""
    stage_diag = rng.uniform(0.1, 2.0, size=band.layout.n_x)
    offset = rng.uniform(-1.0, 1.0)
    return make_pointmass_theta(band, stage_diag, offset, gamma=gamma,
                                train_constraints=train_constraints)
