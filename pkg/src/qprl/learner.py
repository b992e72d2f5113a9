"""Batch Q-learning over the QP approximator parameters.

Each update solves a small convex program over the parameter step: a
proximal quadratic with the TD gradient as the linear term, an optional
masked 1-norm penalty pulling the constraint matrix toward the banded
reference, an optional system-identification penalty fitting it to
replayed trajectories, and positive-semidefiniteness of the cost blocks.

The update program decomposes exactly: cost entries are separable (with
elementwise PSD bounds when the cost blocks are diagonal), and the
constraint matrix splits into independent per-row programs because both
penalties are row-separable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from qprl.approximator import (
    SolveStatusError,
    ThetaParams,
    evaluate_q,
    evaluate_v,
    grad_q_theta,
    policy,
)
from qprl.mpc_structure import (
    BandedReference,
    MaskSpec,
    band_metrics,
    build_c_mask,
    deviation_penalty_value,
    si_penalty_value,
)
from qprl.qp_core import QpProblem, project_psd, solve_qp


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    cost: float

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        self.s_next = np.asarray(self.s_next, dtype=float)
        self.cost = float(self.cost)
        if not (np.all(np.isfinite(self.s)) and np.all(np.isfinite(self.a))
                and np.all(np.isfinite(self.s_next)) and np.isfinite(self.cost)):
            raise ValueError("transition entries must be finite")


@dataclass
class Trajectory:
    """N consecutive transitions: N+1 states and N actions."""

    states: list
    actions: list

    def pack(self, layout) -> np.ndarray:
        return layout.pack_trajectory(self.states, self.actions)


class ReplayBuffer:
    """Episode-aware transition store with a transition-count capacity.

    Old episodes are evicted whole so sampled sequences never cross an
    episode boundary.
    """

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._episodes: list[list[Transition]] = []
        self._count = 0

    def __len__(self):
        return self._count

    def start_episode(self):
        if self._episodes and not self._episodes[-1]:
            return
        self._episodes.append([])

    def add(self, t: Transition):
        if not self._episodes:
            self._episodes.append([])
        self._episodes[-1].append(t)
        self._count += 1
        while self._count > self.capacity and len(self._episodes) > 1:
            dropped = self._episodes.pop(0)
            self._count -= len(dropped)

    def transitions(self):
        for ep in self._episodes:
            yield from ep

    def sample_batch(self, batch_size: int, rng: np.random.Generator):
        flat = [t for ep in self._episodes for t in ep]
        if not flat:
            raise ValueError("buffer is empty")
        idx = rng.integers(0, len(flat), size=batch_size)
        return [flat[i] for i in idx]

    def sequence_windows(self, N: int):
        """(episode, start) pairs of every N-transition window."""
        out = []
        for e, ep in enumerate(self._episodes):
            for j in range(len(ep) - N + 1):
                out.append((e, j))
        return out

    def window(self, e: int, j: int, N: int) -> Trajectory:
        ep = self._episodes[e]
        chunk = ep[j:j + N]
        states = [chunk[0].s] + [t.s_next for t in chunk]
        actions = [t.a for t in chunk]
        return Trajectory(states=states, actions=actions)


def sample_sequences(buffer: ReplayBuffer, M: int, N: int,
                     rng: np.random.Generator) -> list[Trajectory]:
    """M length-N transition sequences, never crossing episode boundaries."""
    windows = buffer.sequence_windows(N)
    if not windows:
        raise ValueError(
            f"no stored episode holds {N} consecutive transitions; defer the SI penalty")
    picks = rng.integers(0, len(windows), size=M)
    return [buffer.window(*windows[i], N) for i in picks]


@dataclass
class UpdateConfig:
    alpha_cost: float = 1e-2
    alpha_constraint: float = 1e-3
    gamma: float = 0.9
    batch_size: int = 32
    mask: MaskSpec = field(default_factory=lambda: MaskSpec(0.0, 0.0, 0.0))
    beta: float = 0.0
    si_sample_count: int = 8
    psd_floor: float = 0.0
    solver_tol: float = 1e-8
    solver_max_iter: int = 100

    def __post_init__(self):
        if self.alpha_cost < 0 or self.alpha_constraint < 0:
            raise ValueError("learning rates must be nonnegative")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")


def td_error(theta: ThetaParams, t: Transition, gamma: float,
             tol: float = 1e-8, max_iter: int = 100) -> float:
    """One-step Bellman residual cost + gamma*V(s+) - Q(s, a)."""
    q, sol_q = evaluate_q(theta, t.s, t.a, tol=tol, max_iter=max_iter)
    if sol_q.status != "optimal":
        raise SolveStatusError(sol_q.status, "Q evaluation")
    v, sol_v = evaluate_v(theta, t.s_next, tol=tol, max_iter=max_iter)
    if sol_v.status != "optimal":
        raise SolveStatusError(sol_v.status, "V evaluation")
    return t.cost + gamma * v - q


def batch_gradient(theta: ThetaParams, batch: list[Transition], gamma: float,
                   tol: float = 1e-8, max_iter: int = 100):
    """Mean of delta * grad Q over the batch.

    Returns (g, info) where info reports skipped transitions and the mean
    TD error over the ones that solved. Transitions whose QPs do not solve
    to optimality are skipped, not fatal.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    acc = np.zeros(theta.flat_size)
    deltas = []
    skipped = 0
    unreliable = 0
    for t in batch:
        try:
            q, sol_q = evaluate_q(theta, t.s, t.a, tol=tol, max_iter=max_iter)
            if sol_q.status != "optimal":
                raise SolveStatusError(sol_q.status)
            v, sol_v = evaluate_v(theta, t.s_next, tol=tol, max_iter=max_iter)
            if sol_v.status != "optimal":
                raise SolveStatusError(sol_v.status)
            grad = grad_q_theta(theta, t.s, t.a, sol_q, kkt_tol=10 * tol)
        except (SolveStatusError, ValueError):
            skipped += 1
            continue
        delta = t.cost + gamma * v - q
        if not grad.reliable:
            unreliable += 1
        acc += delta * grad.flat
        deltas.append(delta)
    if not deltas:
        raise RuntimeError("every transition in the batch was skipped")
    g = acc / len(deltas)
    info = {"skipped": skipped, "used": len(deltas),
            "td_error_mean": float(np.mean(deltas)),
            "unreliable_gradients": unreliable}
    return g, info


def _soft_threshold_step(alpha_g: np.ndarray, m: np.ndarray, t: np.ndarray) -> np.ndarray:
    """argmin_d d^2 - (alpha_g) d + m |d - t|, elementwise."""
    hi = 0.5 * (alpha_g - m)
    lo = 0.5 * (alpha_g + m)
    out = np.where(hi > t, hi, np.where(lo < t, lo, t))
    return out


def _diagonal_psd_path(theta: ThetaParams) -> bool:
    """True when every block with trainable entries is diagonal with only
    diagonal entries trainable, so the PSD constraint is an elementwise
    lower bound."""
    m = theta.trainable_mask
    lay = theta.layout
    offdiag = ~np.eye(lay.stage_dim, dtype=bool)
    for k in range(lay.N):
        if np.any(m.stage[k]):
            if np.any(m.stage[k] & offdiag):
                return False
            blk = theta.stage_cost_blocks[k]
            if np.any(np.abs(blk[offdiag]) > 0):
                return False
    offx = ~np.eye(lay.n_x, dtype=bool)
    if np.any(m.terminal):
        if np.any(m.terminal & offx) or np.any(np.abs(theta.terminal_cost[offx]) > 0):
            return False
    return True


def _row_step_with_si(delta_row_g, mask_row, e0, K, k_lin,
                      tol, max_iter):
    """Solve one constraint-matrix row program with the SI quadratic.

    min  d'(I + K)d + (k_lin - alpha_g)'d + mask'|e0 + d|
    via epigraph variables on the penalized coordinates.
    """
    nz = delta_row_g.size
    ep = mask_row > 0
    n_ep = int(np.sum(ep))
    n = nz + n_ep
    H = np.zeros((n, n))
    H[:nz, :nz] = 2.0 * (np.eye(nz) + K)
    q = np.zeros(n)
    q[:nz] = k_lin - delta_row_g
    q[nz:] = mask_row[ep]
    G = np.zeros((2 * n_ep, n))
    ub = np.empty(2 * n_ep)
    cols = np.where(ep)[0]
    r = np.arange(n_ep)
    G[r, cols] = 1.0
    G[r, nz + r] = -1.0
    ub[:n_ep] = -e0[ep]
    G[n_ep + r, cols] = -1.0
    G[n_ep + r, nz + r] = -1.0
    ub[n_ep:] = e0[ep]
    prob = QpProblem(H=H, q=q, G=G, lb=np.full(2 * n_ep, -np.inf), ub=ub)
    sol = solve_qp(prob, tol=tol, max_iter=max_iter)
    if sol.status != "optimal":
        return None
    return sol.z[:nz]


def update_step(theta: ThetaParams, g: np.ndarray, buffer: ReplayBuffer | None,
                cfg: UpdateConfig, band: BandedReference,
                rng: np.random.Generator | None = None,
                sequences: list[Trajectory] | None = None):
    """One penalized, PSD-constrained parameter update.

    Returns (new_theta, diagnostics). On an unsolvable inner program the
    update is skipped and theta is returned unchanged.
    """
    g = np.asarray(g, dtype=float).ravel()
    if g.size != theta.flat_size:
        raise ValueError("gradient length mismatch")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient has non-finite entries")

    sl = theta.group_slices()
    ix = theta._index()
    vec = theta.flatten()
    delta = np.zeros_like(vec)
    diag = {"skipped": False, "psd_corrections": 0, "row_failures": 0}

    # Per-coordinate learning rate: constraint entries get their own rate.
    alpha = np.full(vec.size, cfg.alpha_cost)
    alpha[sl["eq"]] = cfg.alpha_constraint

    # Cost entries: unconstrained minimizer of d^2 - alpha*g*d is alpha*g/2,
    # clipped from below by the elementwise PSD bound when applicable.
    diagonal_path = _diagonal_psd_path(theta)
    for name in ("stage", "terminal", "linear", "terminal_linear", "offset", "slack"):
        s = sl[name]
        step = 0.5 * alpha[s] * g[s]
        if diagonal_path and name in ("stage", "terminal"):
            step = np.maximum(step, cfg.psd_floor - vec[s])
        delta[s] = step

    # Constraint-matrix entries, row by row.
    s_eq = sl["eq"]
    if s_eq.stop > s_eq.start:
        er, ec = ix["eq"]
        mask = build_c_mask(cfg.mask, band)
        use_dev = np.any(mask > 0)
        use_si = cfg.beta > 0
        taus = None
        if use_si:
            if sequences is not None:
                taus = [t.pack(theta.layout) for t in sequences]
            elif buffer is not None and rng is not None:
                try:
                    seqs = sample_sequences(buffer, cfg.si_sample_count,
                                            theta.layout.N, rng)
                    taus = [t.pack(theta.layout) for t in seqs]
                except ValueError:
                    taus = None  # not enough data yet; defer the SI penalty
        ag = alpha[s_eq] * g[s_eq]
        if not use_dev and (not use_si or taus is None):
            delta[s_eq] = 0.5 * ag
        elif not use_si or taus is None:
            e0 = theta.eq_matrix[er, ec] - band.C0[er, ec]
            t_target = -e0
            delta[s_eq] = _soft_threshold_step(ag, mask[er, ec], t_target)
        else:
            # Row-coupled SI quadratic: beta * sum_i ||(C + dC) tau_i||^2.
            T = np.stack(taus, axis=1)                      # (nz, M)
            K = cfg.beta * (T @ T.T)
            rows_of = {}
            for pos in range(s_eq.start, s_eq.stop):
                rows_of.setdefault(er[pos - s_eq.start], []).append(pos)
            new_eq_rows = {}
            for r_idx, positions in rows_of.items():
                cols = ec[[p - s_eq.start for p in positions]]
                if len(cols) != theta.layout.z_dim:
                    raise NotImplementedError(
                        "SI penalty requires fully trainable constraint rows")
                order = np.argsort(cols)
                positions = [positions[i] for i in order]
                c_row = theta.eq_matrix[r_idx]
                k_lin = 2.0 * cfg.beta * (T @ (T.T @ c_row))
                e0 = c_row - band.C0[r_idx]
                ag_row = np.empty(theta.layout.z_dim)
                for j, p in enumerate(positions):
                    ag_row[j] = alpha[p] * g[p]
                d = _row_step_with_si(ag_row, mask[r_idx], e0, K, k_lin,
                                      cfg.solver_tol, cfg.solver_max_iter)
                if d is None:
                    diag["row_failures"] += 1
                    d = np.zeros(theta.layout.z_dim)
                for j, p in enumerate(positions):
                    delta[p] = d[j]

    new_theta = theta.with_flat(vec + delta)

    # Fallback PSD enforcement when blocks are not diagonal.
    if not diagonal_path:
        blocks = new_theta.stage_cost_blocks.copy()
        changed = False
        for k in range(theta.layout.N):
            if np.any(theta.trainable_mask.stage[k]):
                proj = project_psd(blocks[k], cfg.psd_floor)
                if np.max(np.abs(proj - blocks[k])) > 0:
                    blocks[k] = proj
                    diag["psd_corrections"] += 1
                    changed = True
        terminal = new_theta.terminal_cost
        if np.any(theta.trainable_mask.terminal):
            proj = project_psd(terminal, cfg.psd_floor)
            if np.max(np.abs(proj - terminal)) > 0:
                terminal = proj
                diag["psd_corrections"] += 1
                changed = True
        if changed:
            from dataclasses import replace
            new_theta = replace(new_theta, stage_cost_blocks=blocks,
                                terminal_cost=terminal, _flat_index=None)

    diag["step_norm"] = float(np.linalg.norm(delta))
    diag["deviation_penalty"] = deviation_penalty_value(
        new_theta.eq_matrix, band, build_c_mask(cfg.mask, band))
    if cfg.beta > 0 and buffer is not None:
        try:
            seqs = sample_sequences(buffer, cfg.si_sample_count, theta.layout.N,
                                    rng if rng is not None else np.random.default_rng(0))
            diag["si_penalty"] = si_penalty_value(
                new_theta.eq_matrix, [t.pack(theta.layout) for t in seqs],
                cfg.beta, layout=theta.layout)
        except ValueError:
            diag["si_penalty"] = 0.0
    else:
        diag["si_penalty"] = 0.0
    return new_theta, diag


@dataclass
class TrainSchedule:
    episodes: int = 34
    steps_per_episode: int = 20
    grad_steps_per_episode: int = 1
    log_interval: int = 5
    eval_rollouts: int = 3
    explore_std_start: float = 0.1
    explore_std_end: float = 0.01
    # Constraint entries stay frozen for the first few episodes while the
    # replay buffer fills and the value scale settles; the largest TD errors
    # occur in exactly that window and a single oversized step on C can
    # destabilize the value function for the rest of the run.
    constraint_warmup_episodes: int = 8
    # Rescale a batch gradient so its largest entry is at most this value.
    # A transiently diverged value function can produce gradients orders of
    # magnitude above the healthy range (~1e4 on the point-mass task); one
    # unclipped step then wrecks the constraint matrix. 0 disables.
    grad_clip: float = 1e4
    # The constraint learning rate decays linearly (like the exploration
    # noise) from its full value after warmup down to this fraction in the
    # final episode, so late stochastic updates cannot undo a good policy.
    constraint_rate_end: float = 0.1


@dataclass
class TrainResult:
    theta: ThetaParams
    curve: list          # one dict per logged iteration
    total_skipped: int


def _eval_cost(theta, env, rng, rollouts, steps, gamma, lb_a, ub_a):
    """Discounted cumulative cost, noise on, exploration off."""
    total = 0.0
    for _ in range(rollouts):
        s = env.reset(rng)
        J = 0.0
        for k in range(steps):
            try:
                a = policy(theta, s)
            except SolveStatusError:
                a = np.zeros(len(lb_a))
            a = np.clip(a, lb_a, ub_a)
            s, cost = env.step(a, rng)
            J += gamma ** k * cost
        total += J
    return total / rollouts


def train(env, theta0: ThetaParams, cfg: UpdateConfig, schedule: TrainSchedule,
          band: BandedReference, rng_env: np.random.Generator,
          rng_explore: np.random.Generator, rng_update: np.random.Generator,
          eval_env=None, rng_eval: np.random.Generator | None = None,
          snapshot_hook=None) -> TrainResult:
    """Alternate exploratory rollouts with penalized batch updates.

    ``snapshot_hook(episode, theta)`` fires at every logged iteration.
    With both learning rates zero no update is applied at all, so theta
    passes through unchanged.
    """
    theta = theta0
    buffer = ReplayBuffer(capacity=10_000)
    lb_a, ub_a = env.params.lb_a, env.params.ub_a
    learning = cfg.alpha_cost > 0 or cfg.alpha_constraint > 0
    if eval_env is None:
        eval_env = env
    if rng_eval is None:
        rng_eval = np.random.default_rng(0)
    # Common random numbers: every evaluation replays the same initial states
    # and noise draws, so J_eval differences reflect the policy, not the draw.
    eval_state = rng_eval.bit_generator.state

    curve = []
    total_skipped = 0
    last_td = 0.0

    def log_row(iteration, dev_pen, si_pen):
        rng_eval.bit_generator.state = eval_state
        J = _eval_cost(theta, eval_env, rng_eval, schedule.eval_rollouts,
                       schedule.steps_per_episode, cfg.gamma, lb_a, ub_a)
        metrics = band_metrics(theta.eq_matrix, band)
        curve.append({
            "iteration": iteration,
            "J_eval": J,
            "td_error_mean": last_td,
            "deviation_penalty": dev_pen,
            "si_penalty": si_pen,
            "off_band_l1": metrics["off_band_l1"],
            "on_band_l1": metrics["on_band_l1"],
            "skipped_updates": total_skipped,
        })
        if snapshot_hook is not None:
            snapshot_hook(iteration, theta)

    log_row(0, 0.0, 0.0)   # pre-training baseline
    for ep in range(schedule.episodes):
        frac = ep / max(schedule.episodes - 1, 1)
        std = (schedule.explore_std_start
               + frac * (schedule.explore_std_end - schedule.explore_std_start))
        buffer.start_episode()
        s = env.reset(rng_env)
        for _ in range(schedule.steps_per_episode):
            try:
                a = policy(theta, s, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
            except SolveStatusError:
                a = np.zeros(len(lb_a))
            a = np.clip(a + std * rng_explore.normal(size=len(lb_a)), lb_a, ub_a)
            s_next, cost = env.step(a, rng_env)
            buffer.add(Transition(s, a, s_next, cost))
            s = s_next

        dev_pen = 0.0
        si_pen = 0.0
        if learning:
            warmup = schedule.constraint_warmup_episodes
            if ep < warmup:
                ep_cfg = replace(cfg, alpha_constraint=0.0)
            else:
                span = max(schedule.episodes - 1 - warmup, 1)
                rate_frac = 1.0 + (ep - warmup) / span * (schedule.constraint_rate_end - 1.0)
                ep_cfg = replace(cfg, alpha_constraint=cfg.alpha_constraint * rate_frac)
            for _ in range(schedule.grad_steps_per_episode):
                batch = buffer.sample_batch(cfg.batch_size, rng_update)
                try:
                    g, info = batch_gradient(theta, batch, cfg.gamma,
                                             tol=cfg.solver_tol,
                                             max_iter=cfg.solver_max_iter)
                except RuntimeError:
                    total_skipped += 1
                    continue
                total_skipped += info["skipped"]
                last_td = info["td_error_mean"]
                gmax = float(np.max(np.abs(g)))
                if schedule.grad_clip > 0 and gmax > schedule.grad_clip:
                    g = g * (schedule.grad_clip / gmax)
                theta, diag = update_step(theta, g, buffer, ep_cfg, band, rng_update)
                dev_pen = diag["deviation_penalty"]
                si_pen = diag["si_penalty"]

        if (ep + 1) % schedule.log_interval == 0 or ep == schedule.episodes - 1:
            log_row(ep + 1, dev_pen, si_pen)
    return TrainResult(theta=theta, curve=curve, total_skipped=total_skipped)
