"""QP-based value-function approximation trained by Q-learning, with
penalties that trade off between an unstructured QP and a linear-MPC-like
structured QP."""

from qprl.approximator import (
    SolveStatusError,
    ThetaMask,
    ThetaParams,
    evaluate_q,
    evaluate_v,
    grad_q_theta,
    policy,
)
from qprl.layout import DecisionLayout
from qprl.learner import (
    ReplayBuffer,
    Transition,
    UpdateConfig,
    TrainSchedule,
    batch_gradient,
    sample_sequences,
    td_error,
    train,
    update_step,
)
from qprl.mpc_structure import (
    BandedReference,
    MaskSpec,
    band_metrics,
    build_banded_c,
    build_c_mask,
    deviation_penalty_value,
    si_penalty_value,
)
from qprl.qp_core import (
    PrimalDualSolution,
    QpProblem,
    kkt_residual,
    project_psd,
    solve_qp,
)
from qprl.theta_io import load_theta, save_theta

__all__ = [
    "QpProblem",
    "PrimalDualSolution",
    "solve_qp",
    "kkt_residual",
    "project_psd",
    "DecisionLayout",
    "BandedReference",
    "MaskSpec",
    "build_banded_c",
    "build_c_mask",
    "deviation_penalty_value",
    "si_penalty_value",
    "band_metrics",
    "ThetaParams",
    "ThetaMask",
    "SolveStatusError",
    "evaluate_v",
    "evaluate_q",
    "policy",
    "grad_q_theta",
    "Transition",
    "ReplayBuffer",
    "UpdateConfig",
    "TrainSchedule",
    "td_error",
    "batch_gradient",
    "update_step",
    "sample_sequences",
    "train",
    "save_theta",
    "load_theta",
]
