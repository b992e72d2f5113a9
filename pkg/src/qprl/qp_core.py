"""Dense convex QP solver with full primal-dual output.

Solves problems of the form

    min  1/2 z'Hz + q'z + c
    s.t. Cz = b
         lb <= Gz <= ub
         z[i] = v  for pinned coordinates (i, v)

via a Mehrotra predictor-corrector interior-point method. The multipliers
of every constraint are returned because downstream parameter gradients
are read off the Lagrangian.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class DimensionError(ValueError):
    """Raised when QP data shapes are mutually inconsistent."""


def _as_matrix(M, name, rows=None, cols=None):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if rows is not None and M.shape[0] != rows:
        raise DimensionError(f"{name}: expected {rows} rows, got {M.shape[0]}")
    if cols is not None and M.shape[1] != cols:
        raise DimensionError(f"{name}: expected {cols} cols, got {M.shape[1]}")
    return M


def _as_vector(v, name, size=None):
    v = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    if size is not None and v.size != size:
        raise DimensionError(f"{name}: expected length {size}, got {v.size}")
    return v


@dataclass
class QpProblem:
    """A dense convex QP instance.

    ``lb``/``ub`` entries may be +-inf for one-sided rows. ``fixed`` pins
    individual coordinates and is realized internally as extra equality
    rows appended after the rows of ``C``, so pinned-coordinate multipliers
    come out uniformly with the equality multipliers.
    """

    H: np.ndarray
    q: np.ndarray
    c: float = 0.0
    C: np.ndarray | None = None
    b: np.ndarray | None = None
    G: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    fixed: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        H = _as_matrix(self.H, "H")
        n = H.shape[0]
        if H.shape[1] != n:
            raise DimensionError("H must be square")
        if not np.all(np.isfinite(H)):
            raise ValueError("H has non-finite entries")
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(H))):
            raise ValueError("H is not symmetric")
        self.H = 0.5 * (H + H.T)
        self.q = _as_vector(self.q, "q", n)
        if not np.all(np.isfinite(self.q)) or not np.isfinite(self.c):
            raise ValueError("q/c have non-finite entries")
        self.c = float(self.c)

        if self.C is None:
            self.C = np.zeros((0, n))
            self.b = np.zeros(0)
        else:
            self.C = _as_matrix(self.C, "C", cols=n)
            self.b = _as_vector(self.b if self.b is not None else np.zeros(self.C.shape[0]),
                                "b", self.C.shape[0])
            if not (np.all(np.isfinite(self.C)) and np.all(np.isfinite(self.b))):
                raise ValueError("C/b have non-finite entries")

        if self.G is None:
            self.G = np.zeros((0, n))
            self.lb = np.zeros(0)
            self.ub = np.zeros(0)
        else:
            self.G = _as_matrix(self.G, "G", cols=n)
            m = self.G.shape[0]
            self.lb = _as_vector(self.lb if self.lb is not None else np.full(m, -np.inf), "lb", m)
            self.ub = _as_vector(self.ub if self.ub is not None else np.full(m, np.inf), "ub", m)
            if not np.all(np.isfinite(self.G)):
                raise ValueError("G has non-finite entries")
            if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
                raise ValueError("bounds contain NaN")
            if np.any(self.lb > self.ub):
                raise ValueError("lb > ub on some inequality row")

        for i, v in self.fixed:
            if not (0 <= int(i) < n):
                raise DimensionError(f"pinned index {i} out of range")
            if not np.isfinite(v):
                raise ValueError("pinned value is non-finite")

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def n_eq(self):
        """Total equality rows including pins."""
        return self.C.shape[0] + len(self.fixed)

    def objective(self, z):
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.q @ z + self.c)

    def eq_system(self):
        """Equality rows of C stacked with one identity row per pin."""
        n = self.n
        if not self.fixed:
            return self.C, self.b
        P = np.zeros((len(self.fixed), n))
        v = np.zeros(len(self.fixed))
        for r, (i, val) in enumerate(self.fixed):
            P[r, int(i)] = 1.0
            v[r] = float(val)
        return np.vstack([self.C, P]), np.concatenate([self.b, v])


@dataclass
class PrimalDualSolution:
    """Primal-dual solution of a :class:`QpProblem`.

    ``eq_multipliers`` covers the rows of C followed by the pinned rows.
    Inequality multipliers are nonnegative; lower/upper refer to the two
    sides of ``lb <= Gz <= ub``. ``bound_multipliers_slack`` is filled by
    callers that know which inequality rows are slack nonnegativity rows.
    """

    z: np.ndarray
    objective: float
    eq_multipliers: np.ndarray
    ineq_multipliers_lower: np.ndarray
    ineq_multipliers_upper: np.ndarray
    status: str
    kkt_residual: float
    iterations: int = 0
    degenerate_multipliers: bool = False
    bound_multipliers_slack: np.ndarray | None = None


def kkt_residual(problem: QpProblem, candidate: PrimalDualSolution) -> float:
    """Max of stationarity, feasibility and complementarity inf-norms.

    Zero exactly at an exact KKT point of ``problem``.
    """
    z = _as_vector(candidate.z, "z", problem.n)
    A, b = problem.eq_system()
    chi = _as_vector(candidate.eq_multipliers, "eq_multipliers", A.shape[0])
    m = problem.G.shape[0]
    lo = _as_vector(candidate.ineq_multipliers_lower, "ineq_multipliers_lower", m)
    up = _as_vector(candidate.ineq_multipliers_upper, "ineq_multipliers_upper", m)

    stat = problem.H @ z + problem.q + A.T @ chi
    if m:
        stat = stat - problem.G.T @ lo + problem.G.T @ up
    r = np.max(np.abs(stat), initial=0.0)
    if A.shape[0]:
        r = max(r, np.max(np.abs(A @ z - b)))
    if m:
        gz = problem.G @ z
        fin_lo = np.isfinite(problem.lb)
        fin_up = np.isfinite(problem.ub)
        slack_lo = gz[fin_lo] - problem.lb[fin_lo]
        slack_up = problem.ub[fin_up] - gz[fin_up]
        r = max(r, np.max(np.maximum(-slack_lo, 0.0), initial=0.0))
        r = max(r, np.max(np.maximum(-slack_up, 0.0), initial=0.0))
        r = max(r, np.max(np.maximum(-lo, 0.0), initial=0.0))
        r = max(r, np.max(np.maximum(-up, 0.0), initial=0.0))
        r = max(r, np.max(np.abs(lo[fin_lo] * slack_lo), initial=0.0))
        r = max(r, np.max(np.abs(up[fin_up] * slack_up), initial=0.0))
    return float(r)


def project_psd(M: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Frobenius-nearest symmetric matrix with eigenvalues >= floor.

    Non-symmetric input is symmetrized first; the projection is an
    eigenvalue clamp and is idempotent.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise ValueError("project_psd: non-finite entries")
    S = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(S)
    if w.size and w[0] >= floor:
        return S
    w = np.maximum(w, floor)
    out = (V * w) @ V.T
    return 0.5 * (out + out.T)


def _solve_equality_qp(H, q, A, b, reg=0.0):
    """KKT solve of an equality-constrained QP; returns (x, y)."""
    n, m = H.shape[0], A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H + reg * np.eye(n)
    if m:
        K[:n, n:] = A.T
        K[n:, :n] = A
        K[n:, n:] = -reg * np.eye(m)
    rhs = np.concatenate([-q, b])
    # Ill-conditioned candidate systems are expected here (e.g. speculative
    # active-set polish); callers validate the result instead.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        sol = scipy.linalg.solve(K, rhs)
    return sol[:n], sol[n:]


def _max_step(v, dv):
    """Largest alpha in (0, 1] with v + alpha*dv >= 0 (v > 0)."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _degeneracy_flag(problem, z, lo, up, tol):
    """True when the active-constraint Jacobian is rank-deficient."""
    A, _ = problem.eq_system()
    rows = [A] if A.shape[0] else []
    if problem.G.shape[0]:
        gz = problem.G @ z
        scale = 1.0 + np.max(np.abs(gz), initial=0.0)
        act_lo = np.isfinite(problem.lb) & (np.abs(gz - problem.lb) <= np.sqrt(tol) * scale)
        act_up = np.isfinite(problem.ub) & (np.abs(problem.ub - gz) <= np.sqrt(tol) * scale)
        active = act_lo | act_up
        if np.any(active):
            rows.append(problem.G[active])
    if not rows:
        return False
    J = np.vstack(rows)
    if J.shape[0] <= 0:
        return False
    sv = np.linalg.svd(J, compute_uv=False)
    rank = int(np.sum(sv > 1e-8 * max(1.0, sv[0] if sv.size else 0.0)))
    return rank < min(J.shape)


def solve_qp(problem: QpProblem, tol: float = 1e-8, max_iter: int = 100) -> PrimalDualSolution:
    """Solve a dense convex QP, returning primal and dual variables.

    Infeasibility is reported through ``status`` (never raised) so callers
    iterating over transiently bad parameters can skip and continue.
    """
    n = problem.n
    H = problem.H
    q = problem.q
    A, b = problem.eq_system()

    # Split inequality rows: equal-bound rows become internal equalities.
    G, lb, ub = problem.G, problem.lb, problem.ub
    m = G.shape[0]
    tight = np.zeros(m, dtype=bool)
    if m:
        both = np.isfinite(lb) & np.isfinite(ub)
        tight = both & (ub - lb <= 1e-12 * np.maximum(1.0, np.abs(ub)))
    A_int = np.vstack([A, G[tight]]) if np.any(tight) else A
    b_int = np.concatenate([b, 0.5 * (lb[tight] + ub[tight])]) if np.any(tight) else b
    free = ~tight
    Gf, lbf, ubf = G[free], lb[free], ub[free]

    lo_idx = np.where(np.isfinite(lbf))[0]
    up_idx = np.where(np.isfinite(ubf))[0]
    G_lo, lb_lo = Gf[lo_idx], lbf[lo_idx]
    G_up, ub_up = Gf[up_idx], ubf[up_idx]
    n_lo, n_up = len(lo_idx), len(up_idx)
    n_eq = A_int.shape[0]

    def _active_sets(z, y, lam_lo, lam_up):
        """Candidate active-set identifications, most reliable first."""
        s_lo = np.maximum(G_lo @ z - lb_lo, 0.0) if n_lo else np.zeros(0)
        s_up = np.maximum(ub_up - G_up @ z, 0.0) if n_up else np.zeros(0)
        yield lam_lo > s_lo, lam_up > s_up
        scale_lo = 1.0 + np.abs(lb_lo)
        scale_up = 1.0 + np.abs(ub_up)
        root = np.sqrt(tol)
        yield s_lo <= root * scale_lo, s_up <= root * scale_up
        lmax = max(np.max(lam_lo, initial=0.0), np.max(lam_up, initial=0.0), 1.0)
        yield lam_lo > 1e-6 * lmax, lam_up > 1e-6 * lmax

    def polish(z, y, act_lo, act_up, rounds: int = 10):
        """Refine a candidate active set to sharpen residuals.

        Each round solves the equality-constrained QP on the current set,
        then drops rows with wrong-sign multipliers and adds violated rows.
        Returns the first sign- and feasibility-clean iterate, or None.
        """
        act_lo = act_lo.copy()
        act_up = act_up.copy()
        for _ in range(rounds):
            A_act = np.vstack([A_int, G_lo[act_lo], G_up[act_up]])
            b_act = np.concatenate([b_int, lb_lo[act_lo], ub_up[act_up]])
            try:
                xp, nu = _solve_equality_qp(H, q, A_act, b_act)
            except scipy.linalg.LinAlgError:
                try:
                    xp, nu = _solve_equality_qp(H, q, A_act, b_act, reg=1e-9)
                except scipy.linalg.LinAlgError:
                    return None
            if not np.all(np.isfinite(xp)):
                return None
            yp = nu[:A_int.shape[0]]
            k = A_int.shape[0]
            ll = np.zeros(n_lo)
            uu = np.zeros(n_up)
            nact_lo = int(np.sum(act_lo))
            ll[act_lo] = -nu[k:k + nact_lo]
            uu[act_up] = nu[k + nact_lo:]
            g_lo = (G_lo @ xp - lb_lo) if n_lo else np.zeros(0)
            g_up = (ub_up - G_up @ xp) if n_up else np.zeros(0)
            viol_lo = (g_lo < -1e-10) & ~act_lo
            viol_up = (g_up < -1e-10) & ~act_up
            neg_lo = act_lo & (ll < -1e-9)
            neg_up = act_up & (uu < -1e-9)
            if not (np.any(viol_lo) or np.any(viol_up) or np.any(neg_lo) or np.any(neg_up)):
                return xp, yp, np.maximum(ll, 0.0), np.maximum(uu, 0.0)
            act_lo = (act_lo & ~neg_lo) | viol_lo
            act_up = (act_up & ~neg_up) | viol_up
        return None

    def build(z, y, lam_lo, lam_up, status, iters):
        lo_full = np.zeros(m)
        up_full = np.zeros(m)
        fidx = np.where(free)[0]
        lo_full[fidx[lo_idx]] = np.maximum(lam_lo, 0.0)
        up_full[fidx[up_idx]] = np.maximum(lam_up, 0.0)
        # Equal-bound rows were solved as equalities; split their
        # multiplier by sign back onto the two inequality sides.
        n_orig_eq = A.shape[0]
        y_tight = y[n_orig_eq:]
        tidx = np.where(tight)[0]
        lo_full[tidx] = np.maximum(-y_tight, 0.0)
        up_full[tidx] = np.maximum(y_tight, 0.0)
        sol = PrimalDualSolution(
            z=z,
            objective=problem.objective(z),
            eq_multipliers=y[:n_orig_eq],
            ineq_multipliers_lower=lo_full,
            ineq_multipliers_upper=up_full,
            status=status,
            kkt_residual=np.inf,
            iterations=iters,
        )
        sol.kkt_residual = kkt_residual(problem, sol)
        return sol

    def finish(z, y, lam_lo, lam_up, status, iters):
        sol = build(z, y, lam_lo, lam_up, status, iters)
        if status in ("optimal", "max_iter") and (n_lo or n_up):
            for act_lo, act_up in _active_sets(z, y, lam_lo, lam_up):
                p = polish(z, y, act_lo, act_up)
                if p is None:
                    continue
                alt = build(p[0], p[1], p[2], p[3], status, iters)
                if alt.kkt_residual < sol.kkt_residual:
                    sol = alt
                if sol.kkt_residual <= tol:
                    break
        if sol.kkt_residual <= tol:
            sol.status = "optimal"
        elif sol.status == "optimal":
            sol.status = "max_iter"
        if sol.status == "optimal":
            sol.degenerate_multipliers = _degeneracy_flag(
                problem, sol.z, sol.ineq_multipliers_lower, sol.ineq_multipliers_upper, tol)
        return sol

    # No (one-sided) inequalities: a single KKT solve suffices.
    if n_lo == 0 and n_up == 0:
        try:
            x, y = _solve_equality_qp(H, q, A_int, b_int)
        except scipy.linalg.LinAlgError:
            x, y = _solve_equality_qp(H, q, A_int, b_int, reg=1e-9)
        if not np.all(np.isfinite(x)):
            x, y = _solve_equality_qp(H, q, A_int, b_int, reg=1e-9)
        if not np.all(np.isfinite(x)):
            x, y = np.zeros(n), np.zeros(A_int.shape[0])
        eq_res = np.max(np.abs(A_int @ x - b_int), initial=0.0)
        status = "optimal" if eq_res <= tol else "infeasible"
        return finish(x, y, np.zeros(0), np.zeros(0), status, 1)

    # Interior-point starting iterate.
    try:
        x, y = _solve_equality_qp(H + np.eye(n), q, A_int, b_int, reg=1e-10)
    except scipy.linalg.LinAlgError:
        x, y = np.zeros(n), np.zeros(n_eq)
    if not np.all(np.isfinite(x)):
        x, y = np.zeros(n), np.zeros(n_eq)
    s_lo = np.maximum(G_lo @ x - lb_lo, 1.0) if n_lo else np.zeros(0)
    s_up = np.maximum(ub_up - G_up @ x, 1.0) if n_up else np.zeros(0)
    # Scale initial duals to the gradient magnitude so large linear costs
    # (e.g. heavy slack penalties) don't stall early iterations.
    lam0 = min(max(1.0, np.max(np.abs(H @ x + q), initial=1.0)), 1e6)
    lam_lo = np.full(n_lo, lam0)
    lam_up = np.full(n_up, lam0)
    n_comp = n_lo + n_up

    best_res = np.inf
    best_state = None
    stall = 0
    for it in range(max_iter):
        r_d = H @ x + q + (A_int.T @ y if n_eq else 0.0)
        if n_lo:
            r_d = r_d - G_lo.T @ lam_lo
        if n_up:
            r_d = r_d + G_up.T @ lam_up
        r_p = (A_int @ x - b_int) if n_eq else np.zeros(0)
        r_lo = (G_lo @ x - lb_lo - s_lo) if n_lo else np.zeros(0)
        r_up = (ub_up - G_up @ x - s_up) if n_up else np.zeros(0)
        mu = (s_lo @ lam_lo + s_up @ lam_up) / n_comp

        # Convergence is measured against true constraint slacks so it
        # agrees with the reported kkt_residual.
        true_lo = (G_lo @ x - lb_lo) if n_lo else np.zeros(0)
        true_up = (ub_up - G_up @ x) if n_up else np.zeros(0)
        res = max(
            np.max(np.abs(r_d), initial=0.0),
            np.max(np.abs(r_p), initial=0.0),
            np.max(np.maximum(-true_lo, 0.0), initial=0.0),
            np.max(np.maximum(-true_up, 0.0), initial=0.0),
            np.max(np.abs(true_lo * lam_lo), initial=0.0),
            np.max(np.abs(true_up * lam_up), initial=0.0),
        )
        if res <= tol:
            sol = finish(x, y, lam_lo, lam_up, "optimal", it)
            if sol.status == "optimal":
                return sol
            # True-slack recheck failed marginally; keep iterating.

        if best_state is None or res < best_state[0]:
            best_state = (res, x.copy(), y.copy(), lam_lo.copy(), lam_up.copy())

        prim = max(np.max(np.abs(r_p), initial=0.0),
                   np.max(np.abs(r_lo), initial=0.0),
                   np.max(np.abs(r_up), initial=0.0))
        if res < 0.9 * best_res:
            best_res = res
            stall = 0
        else:
            stall += 1
        dual_scale = max(np.max(np.abs(lam_lo), initial=0.0),
                         np.max(np.abs(lam_up), initial=0.0),
                         np.max(np.abs(y), initial=0.0))
        # Divergence of the infeasibility measure: complementarity gap
        # collapses or duals blow up while primal residual stays large.
        if (mu < 1e-10 and prim > max(1e-6, 1e3 * tol)) or dual_scale > 1e14:
            return finish(x, y, lam_lo, lam_up, "infeasible", it)
        if stall > 20:
            status = "infeasible" if prim > max(1e-6, 1e3 * tol) else "max_iter"
            if best_state is not None:
                _, x, y, lam_lo, lam_up = best_state
            return finish(x, y, lam_lo, lam_up, status, it)

        # Normal-equation block M = H + G' diag(lam/s) G.
        M = H.copy()
        if n_lo:
            M += G_lo.T @ (G_lo * (lam_lo / s_lo)[:, None])
        if n_up:
            M += G_up.T @ (G_up * (lam_up / s_up)[:, None])
        K = np.zeros((n + n_eq, n + n_eq))
        K[:n, :n] = M
        if n_eq:
            K[:n, n:] = A_int.T
            K[n:, :n] = A_int

        lu = None
        for reg in (0.0, 1e-9, 1e-7, 1e-5):
            Kr = K.copy()
            if reg:
                Kr[:n, :n] += reg * np.eye(n)
                if n_eq:
                    Kr[n:, n:] -= reg * np.eye(n_eq)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                    lu = scipy.linalg.lu_factor(Kr, check_finite=False)
                    probe = scipy.linalg.lu_solve(lu, np.ones(n + n_eq), check_finite=False)
                if np.all(np.isfinite(probe)):
                    break
            except scipy.linalg.LinAlgError:
                lu = None
        if lu is None:
            return finish(x, y, lam_lo, lam_up, "max_iter", it)

        def newton(rc_lo, rc_up):
            rhs = np.concatenate([-r_d, -r_p])
            if n_lo:
                rhs[:n] -= G_lo.T @ ((lam_lo * r_lo + rc_lo) / s_lo)
            if n_up:
                rhs[:n] += G_up.T @ ((lam_up * r_up + rc_up) / s_up)
            if not np.all(np.isfinite(rhs)):
                return None
            sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
            if not np.all(np.isfinite(sol)):
                return None
            dx, dy = sol[:n], sol[n:]
            ds_lo = (G_lo @ dx + r_lo) if n_lo else np.zeros(0)
            dl_lo = -(lam_lo * ds_lo + rc_lo) / s_lo if n_lo else np.zeros(0)
            ds_up = (-G_up @ dx + r_up) if n_up else np.zeros(0)
            dl_up = -(lam_up * ds_up + rc_up) / s_up if n_up else np.zeros(0)
            return dx, dy, ds_lo, dl_lo, ds_up, dl_up

        # Predictor.
        pred = newton(s_lo * lam_lo, s_up * lam_up)
        if pred is None:
            break
        dxa, dya, dsla, dlla, dsua, dlua = pred
        a_p = min(_max_step(s_lo, dsla), _max_step(s_up, dsua))
        a_d = min(_max_step(lam_lo, dlla), _max_step(lam_up, dlua))
        mu_aff = ((s_lo + a_p * dsla) @ (lam_lo + a_d * dlla)
                  + (s_up + a_p * dsua) @ (lam_up + a_d * dlua)) / n_comp
        sigma = (max(mu_aff, 0.0) / mu) ** 3

        # Corrector.
        rc_lo = s_lo * lam_lo + dsla * dlla - sigma * mu
        rc_up = s_up * lam_up + dsua * dlua - sigma * mu
        corr = newton(rc_lo, rc_up)
        if corr is None:
            break
        dx, dy, ds_lo, dl_lo, ds_up, dl_up = corr
        a_p = min(_max_step(s_lo, ds_lo), _max_step(s_up, ds_up))
        a_d = min(_max_step(lam_lo, dl_lo), _max_step(lam_up, dl_up))
        eta = max(0.995, 1.0 - mu)
        a_p = min(1.0, eta * a_p)
        a_d = min(1.0, eta * a_d)

        x = x + a_p * dx
        y = y + a_d * dy
        # Tiny floors guard against exact-zero slacks from underflow.
        s_lo = np.maximum(s_lo + a_p * ds_lo, 1e-16)
        s_up = np.maximum(s_up + a_p * ds_up, 1e-16)
        lam_lo = np.maximum(lam_lo + a_d * dl_lo, 1e-16)
        lam_up = np.maximum(lam_up + a_d * dl_up, 1e-16)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam_lo)) and np.all(np.isfinite(lam_up))):
            return finish(np.nan_to_num(x), np.nan_to_num(y), np.nan_to_num(lam_lo),
                          np.nan_to_num(lam_up), "max_iter", it)

    if best_state is not None and best_state[0] < np.inf:
        _, x, y, lam_lo, lam_up = best_state
    sol = finish(x, y, lam_lo, lam_up, "max_iter", max_iter)
    if sol.kkt_residual <= tol:
        sol.status = "optimal"
        sol.degenerate_multipliers = _degeneracy_flag(
            problem, sol.z, sol.ineq_multipliers_lower, sol.ineq_multipliers_upper, tol)
    return sol
