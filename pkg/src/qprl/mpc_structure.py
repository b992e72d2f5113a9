"""Banded reference constraint matrix, scaling mask and structure penalties.

The reference matrix C0 stacks one [A B -I] block row per stage. The mask
scales an entrywise 1-norm penalty on the deviation of a learned constraint
matrix from C0; the system-identification penalty fits the constraint
matrix to observed trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qprl.layout import DecisionLayout


@dataclass(frozen=True)
class BandedReference:
    """C0 and the model (A, B) it was built from."""

    C0: np.ndarray
    A: np.ndarray
    B: np.ndarray
    layout: DecisionLayout

    def band_pattern(self) -> np.ndarray:
        """Boolean footprint of the [A B -I] blocks."""
        lay = self.layout
        pat = np.zeros(self.C0.shape, dtype=bool)
        for k in range(lay.N):
            rows = slice(k * lay.n_x, (k + 1) * lay.n_x)
            cols = slice(k * lay.stage_dim, k * lay.stage_dim + lay.stage_dim + lay.n_x)
            pat[rows, cols] = True
        return pat


@dataclass(frozen=True)
class MaskSpec:
    """Scaling constants: c2 on the band, c1 above/right, c3 below/left."""

    c1: float = 1.0
    c2: float = 1e-4
    c3: float = 0.0

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) < 0:
            raise ValueError("mask constants must be nonnegative")


def build_banded_c(A, B, N: int) -> BandedReference:
    """Stack [A B -I] block rows for an N-stage rollout constraint.

    C0 @ z == 0 for every noiseless rollout z of x+ = A x + B u.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n_x = A.shape[0]
    if A.shape[1] != n_x:
        raise ValueError("A must be square")
    if B.shape[0] != n_x:
        raise ValueError("B row count must match A")
    n_u = B.shape[1]
    lay = DecisionLayout(n_x, n_u, int(N))
    C0 = np.zeros((lay.n_eq, lay.z_dim))
    for k in range(N):
        rows = slice(k * n_x, (k + 1) * n_x)
        C0[rows, lay.state_slice(k)] = A
        C0[rows, lay.action_slice(k)] = B
        C0[rows, lay.state_slice(k + 1)] = -np.eye(n_x)
    return BandedReference(C0=C0, A=A, B=B, layout=lay)


def build_c_mask(spec: MaskSpec, band: BandedReference) -> np.ndarray:
    """Mask matrix with c2 on the band blocks, c1 above, c3 below."""
    lay = band.layout
    mask = np.empty(band.C0.shape)
    for k in range(lay.N):
        rows = slice(k * lay.n_x, (k + 1) * lay.n_x)
        band_start = k * lay.stage_dim
        band_stop = band_start + lay.stage_dim + lay.n_x
        mask[rows, :band_start] = spec.c3
        mask[rows, band_start:band_stop] = spec.c2
        mask[rows, band_stop:] = spec.c1
    return mask


def deviation_penalty_value(C, band: BandedReference, mask) -> float:
    """Masked entrywise 1-norm of C - C0."""
    C = np.asarray(C, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if C.shape != band.C0.shape or mask.shape != band.C0.shape:
        raise ValueError("shape mismatch with C0")
    return float(np.sum(mask * np.abs(C - band.C0)))


def si_penalty_value(C, trajectories, beta: float,
                     layout: DecisionLayout | None = None) -> float:
    """beta * sum_i ||C tau_i||^2 over stacked trajectory vectors.

    With a layout, the residual is accumulated segment by segment
    ([x0], [u0], [x1], ...) using the same block shapes as a simulator
    stepping x+ = A x + B u, so a banded C annihilates noiseless rollouts
    exactly (to the last bit), not just to rounding error.
    """
    C = np.asarray(C, dtype=float)
    total = 0.0
    for tau in trajectories:
        tau = np.asarray(tau, dtype=float).ravel()
        if tau.size != C.shape[1]:
            raise ValueError("trajectory length does not match C columns")
        if layout is None:
            r = C @ tau
        else:
            segs = [layout.state_slice(0)]
            for k in range(layout.N):
                segs.append(layout.action_slice(k))
                segs.append(layout.state_slice(k + 1))
            r = np.zeros(C.shape[0])
            for k in range(layout.N):
                rows = slice(k * layout.n_x, (k + 1) * layout.n_x)
                for seg in segs:
                    blk = np.ascontiguousarray(C[rows, seg])
                    r[rows] += blk @ tau[seg]
        total += float(r @ r)
    return float(beta) * total


def band_metrics(C, band: BandedReference) -> dict:
    """1-norm mass on and off the band footprint, plus deviation from C0."""
    C = np.asarray(C, dtype=float)
    if C.shape != band.C0.shape:
        raise ValueError("shape mismatch with C0")
    pat = band.band_pattern()
    absC = np.abs(C)
    return {
        "on_band_l1": float(np.sum(absC[pat])),
        "off_band_l1": float(np.sum(absC[~pat])),
        "deviation_from_c0_l1": float(np.sum(np.abs(C - band.C0))),
    }
