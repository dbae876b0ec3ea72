"""Operator-splitting convex QP engine with active-set polishing.

Solves  minimize 0.5 x'Px + q'x  subject to  l <= Ax <= u  by an ADMM scheme
on the splitting (x, z = Ax), with Ruiz equilibration for conditioning, a
single KKT factorization reused across bound updates (the key property that
makes branch-and-bound cheap: fixing a binary only changes l/u), optional
iteration-triggered rho adaptation, and an active-set polish step at
convergence that typically lands the KKT residuals near machine precision.

Infinite bounds are allowed on constraint rows; variable bounds must be
finite (the assembled problems always are).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContractViolation
from .formulation import MiqpProblem


@dataclass(frozen=True)
class QpSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-9
    eps_inf: float = 1e-4       # primal infeasibility certificate tolerance
    max_iter: int = 20000
    check_interval: int = 25
    sigma: float = 1e-6
    alpha: float = 1.6
    rho: float = 1.0
    rho_eq_scale: float = 1e3
    stall_checks: int = 10  # residual checks without progress before a dual restart
    scaling_iters: int = 10
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 500
    adaptive_rho_threshold: float = 5.0
    adaptive_rho_max_factor: float = 10.0  # largest single adjustment
    adaptive_rho_max_updates: int = 4      # per solve call
    polish: bool = True
    polish_delta: float = 1e-7
    polish_refine_iters: int = 3
    # once residuals reach eps_coarse, polishing is attempted as an accelerator;
    # an accepted polish must still meet the fine tolerance to return early
    eps_coarse: float = 1e-4
    # safeguarded Anderson acceleration of the splitting iteration (0 = off;
    # it trades fewer iterations for per-iteration overhead and only pays on
    # severely ill-conditioned problems)
    aa_memory: int = 0
    aa_safeguard: float = 2.0  # tolerated growth of the fixed-point residual
    aa_regularization: float = 1e-10


@dataclass
class QpSolution:
    """Result of one convex solve.

    ``objective`` includes the problem's constant term, so it is directly
    comparable with integral incumbents. For an optimal status it is a lower
    bound (up to solver tolerance) for every completion of the fixings the
    solve was given.
    """

    x: np.ndarray
    y: np.ndarray
    objective: float
    status: str  # "optimal" | "infeasible" | "max-iterations"
    prim_res: float
    dual_res: float
    iterations: int
    polished: bool = False
    certificate_residual: float | None = None


class _Anderson:
    """Type-II Anderson acceleration over a fixed-point map s -> T(s)."""

    def __init__(self, dim: int, memory: int, regularization: float):
        self.memory = memory
        self.reg = regularization
        self.d_res = np.zeros((dim, memory))
        self.d_map = np.zeros((dim, memory))
        self.count = 0
        self.prev_map = None
        self.prev_res = None

    def reset(self) -> None:
        self.count = 0
        self.prev_map = None
        self.prev_res = None

    def candidate(self, mapped: np.ndarray, residual: np.ndarray) -> np.ndarray | None:
        """Record (T(s), s - T(s)) and return an accelerated iterate if possible."""
        if self.prev_map is not None:
            k = self.count % self.memory
            self.d_map[:, k] = mapped - self.prev_map
            self.d_res[:, k] = residual - self.prev_res
            self.count += 1
        self.prev_map = mapped.copy()
        self.prev_res = residual.copy()
        depth = min(self.count, self.memory)
        if depth == 0:
            return None
        dr = self.d_res[:, :depth]
        gram = dr.T @ dr
        gram += self.reg * (1.0 + np.trace(gram)) * np.eye(depth)
        try:
            gamma = np.linalg.solve(gram, dr.T @ residual)
        except np.linalg.LinAlgError:
            return None
        return mapped - self.d_map[:, :depth] @ gamma


def _col_inf_norms(m: sp.spmatrix) -> np.ndarray:
    m = abs(m.tocsc())
    out = np.zeros(m.shape[1])
    nz = m.indptr[:-1] != m.indptr[1:]
    if m.nnz:
        out_nz = np.maximum.reduceat(m.data, m.indptr[:-1][nz])
        out[nz] = out_nz
    return out


def _row_inf_norms(m: sp.spmatrix) -> np.ndarray:
    return _col_inf_norms(m.T.tocsc())


class BoxQp:
    """Reusable workspace for one constraint structure with varying bounds."""

    def __init__(
        self,
        p_matrix: sp.spmatrix,
        q_vector: np.ndarray,
        a_matrix: sp.spmatrix,
        lower: np.ndarray,
        upper: np.ndarray,
        objective_constant: float = 0.0,
        settings: QpSettings | None = None,
        bounds_row_offset: int | None = None,
    ):
        self.settings = settings or QpSettings()
        self.n = q_vector.shape[0]
        self.m = lower.shape[0]
        self.p0 = p_matrix.tocsr()
        self.q0 = np.asarray(q_vector, dtype=float)
        self.a0 = a_matrix.tocsr()
        self.a0t = self.a0.T.tocsr()
        self.l0 = np.asarray(lower, dtype=float)
        self.u0 = np.asarray(upper, dtype=float)
        self.constant = float(objective_constant)
        # first row of the identity block holding variable bounds (for fixings)
        self.bounds_row_offset = self.m - self.n if bounds_row_offset is None else bounds_row_offset
        self._equilibrate()
        eq_mask = self.l0 == self.u0
        self.rho_vec = np.full(self.m, self.settings.rho)
        self.rho_vec[eq_mask] = self.settings.rho * self.settings.rho_eq_scale
        self.rho_scale = 1.0
        self._factorize()
        self._xbar = np.zeros(self.n)
        self._ybar = np.zeros(self.m)
        self._zbar = np.zeros(self.m)

    @classmethod
    def from_miqp(cls, problem: MiqpProblem, settings: QpSettings | None = None) -> "BoxQp":
        """Relax a MIQP: binaries become [0,1] continuous, bounds become identity rows."""
        if not (np.all(np.isfinite(problem.lower)) and np.all(np.isfinite(problem.upper))):
            raise ContractViolation("all variable bounds must be finite")
        n = problem.n_vars
        a = sp.vstack(
            [problem.a_ineq, problem.a_eq, sp.identity(n, format="csr")], format="csr"
        )
        l = np.concatenate([np.full(problem.n_ineq, -np.inf), problem.b_eq, problem.lower])
        u = np.concatenate([problem.b_ineq, problem.b_eq, problem.upper])
        return cls(
            2.0 * problem.q_matrix,
            problem.c_vector,
            a,
            l,
            u,
            objective_constant=problem.objective_constant,
            settings=settings,
            bounds_row_offset=problem.n_ineq + problem.n_eq,
        )

    # ------------------------------------------------------------------ setup
    def _equilibrate(self) -> None:
        """Modified Ruiz scaling of (P, q, A) with cost normalization."""
        n, m = self.n, self.m
        d = np.ones(n)
        e = np.ones(m)
        cost = 1.0
        ps = self.p0.tocsc()
        as_ = self.a0.tocsc()
        qs = self.q0.copy()
        for _ in range(self.settings.scaling_iters):
            col = np.maximum(_col_inf_norms(ps), _col_inf_norms(as_))
            col[col < 1e-12] = 1.0
            d_step = 1.0 / np.sqrt(np.clip(col, 1e-8, 1e8))
            row = _row_inf_norms(as_)
            row[row < 1e-12] = 1.0
            e_step = 1.0 / np.sqrt(np.clip(row, 1e-8, 1e8))
            dd = sp.diags(d_step)
            ee = sp.diags(e_step)
            ps = (dd @ ps @ dd).tocsc()
            as_ = (ee @ as_ @ dd).tocsc()
            qs = d_step * qs
            d *= d_step
            e *= e_step
            p_col = _col_inf_norms(ps)
            denom = max(float(np.mean(p_col)), float(np.max(np.abs(qs), initial=0.0)))
            if denom > 1e-12:
                g = 1.0 / denom
                g = min(max(g, 1e-6), 1e6)
                ps = ps * g
                qs = qs * g
                cost *= g
        self.ps = ps
        self.as_ = as_
        self.ast = as_.T.tocsc()
        self.qs = qs
        self.d = d
        self.e = e
        self.cost = cost

    def _factorize(self) -> None:
        rho = self.rho_vec * self.rho_scale
        kkt = sp.bmat(
            [
                [self.ps + self.settings.sigma * sp.identity(self.n), self.ast],
                [self.as_, -sp.diags(1.0 / rho)],
            ],
            format="csc",
        )
        self._lu = spla.splu(kkt)
        self._rho_cur = rho

    # ------------------------------------------------------------------ solve
    def solve(
        self,
        fixings: dict[int, float] | None = None,
        warm_start=None,
        max_iter: int | None = None,
        eps_abs: float | None = None,
    ) -> QpSolution:
        """Solve with current data, optionally pinning variables via their bound rows.

        ``warm_start``: "carry" (default) continues from the previous solve's
        iterates, "cold" starts from zero, an array warm-starts the primal
        while carrying the dual.
        """
        st = self.settings
        max_iter = max_iter or st.max_iter
        eps_abs = st.eps_abs if eps_abs is None else eps_abs
        l_cur = self.l0.copy()
        u_cur = self.u0.copy()
        if fixings:
            off = self.bounds_row_offset
            for var, val in fixings.items():
                l_cur[off + var] = val
                u_cur[off + var] = val
        ls = self.e * l_cur
        us = self.e * u_cur

        # state: scaled primal xb plus the splitting variable u = z + y/rho,
        # from which z = clip(u) and y = rho (u - z) are reconstructed
        rho = self._rho_cur
        if isinstance(warm_start, str) and warm_start == "cold":
            xb = np.zeros(self.n)
            u = np.minimum(np.maximum(np.zeros(self.m), ls), us)
        elif warm_start is None or (isinstance(warm_start, str) and warm_start == "carry"):
            xb = self._xbar.copy()
            u = np.minimum(np.maximum(self._zbar, ls), us) + self._ybar / rho
        else:
            xb = np.asarray(warm_start, dtype=float) / self.d
            u = np.minimum(np.maximum(self.as_ @ xb, ls), us) + self._ybar / rho

        alpha = st.alpha
        one_minus_alpha = 1.0 - alpha
        n = self.n
        y_prev_check = None
        status = "max-iterations"
        prim_res = dual_res = math.inf
        cert = None
        it = 0
        rho_updates = 0
        polish_after = 0
        rhs = np.empty(n + self.m)
        pol_result = None
        best_prim = math.inf
        checks_since_progress = 0
        restarted = False
        accel = _Anderson(n + self.m, max(st.aa_memory, 0), st.aa_regularization)
        fp_best = math.inf
        plain_x = xb
        plain_u = u
        zb = np.minimum(np.maximum(u, ls), us)
        yb = rho * (u - zb)
        for it in range(1, max_iter + 1):
            zb = np.minimum(np.maximum(u, ls), us)
            yb = rho * (u - zb)
            rhs[:n] = st.sigma * xb - self.qs
            rhs[n:] = 2.0 * zb - u
            sol = self._lu.solve(rhs)
            xt = sol[:n]
            zt = 2.0 * zb - u + sol[n:] / rho
            x_next = alpha * xt + one_minus_alpha * xb
            w = alpha * zt + one_minus_alpha * zb
            u_next = w + u - zb

            do_check = it % st.check_interval == 0 or it == max_iter
            if st.aa_memory > 0:
                mapped = np.concatenate([x_next, u_next])
                residual = np.concatenate([xb - x_next, u - u_next])
                fp_norm = float(np.linalg.norm(residual))
                if fp_norm > st.aa_safeguard * fp_best and accel.count > 0:
                    # acceleration overshot: fall back to the last plain iterate
                    accel.reset()
                    xb, u = plain_x, plain_u
                    fp_best = math.inf
                    continue
                fp_best = min(fp_best, fp_norm)
                plain_x, plain_u = x_next, u_next
                cand = accel.candidate(mapped, residual)
                if cand is not None and not do_check:
                    xb = cand[:n]
                    u = cand[n:]
                else:
                    xb, u = x_next, u_next
            else:
                xb, u = x_next, u_next

            if do_check:
                zb = np.minimum(np.maximum(u, ls), us)
                yb = rho * (u - zb)
                x = self.d * xb
                z = zb / self.e
                y = self.e * yb / self.cost
                ax = self.a0 @ x
                px = self.p0 @ x
                aty = self.a0t @ y
                prim_res = float(np.max(np.abs(ax - z), initial=0.0))
                dual_res = float(np.max(np.abs(px + self.q0 + aty), initial=0.0))
                eps_p = eps_abs + st.eps_rel * max(
                    np.max(np.abs(ax), initial=0.0), np.max(np.abs(z), initial=0.0)
                )
                eps_d = eps_abs + st.eps_rel * max(
                    np.max(np.abs(px), initial=0.0),
                    np.max(np.abs(aty), initial=0.0),
                    np.max(np.abs(self.q0), initial=0.0),
                )
                if prim_res <= eps_p and dual_res <= eps_d:
                    status = "optimal"
                    break
                # attempt an early polish once the coarse tolerance is reached
                if (
                    st.polish
                    and it >= polish_after
                    and prim_res <= st.eps_coarse
                    and dual_res <= st.eps_coarse
                ):
                    pol = self._polish(x, y, l_cur, u_cur, prim_res, dual_res)
                    if pol is not None and max(pol[2], pol[3]) <= eps_abs:
                        status = "optimal"
                        pol_result = pol
                        break
                    polish_after = it + 5 * st.check_interval
                if y_prev_check is not None:
                    dy = y - y_prev_check
                    cert = self._primal_infeasibility(dy, l_cur, u_cur)
                    if cert is not None:
                        status = "infeasible"
                        break
                y_prev_check = y
                # a warm start can poison the dual state; restart it once if the
                # primal residual stops making progress
                if prim_res < 0.7 * best_prim:
                    best_prim = prim_res
                    checks_since_progress = 0
                else:
                    checks_since_progress += 1
                if (
                    not restarted
                    and checks_since_progress >= st.stall_checks
                    and prim_res > 1e3 * eps_abs
                ):
                    restarted = True
                    u = np.minimum(np.maximum(self.as_ @ xb, ls), us)
                    y_prev_check = None
                    checks_since_progress = 0
                    best_prim = math.inf
                    accel.reset()
                    fp_best = math.inf
                    plain_x, plain_u = xb, u
                    continue
                if (
                    st.adaptive_rho
                    and it % st.adaptive_rho_interval == 0
                    and it < max_iter
                    and rho_updates < st.adaptive_rho_max_updates
                ):
                    if self._maybe_update_rho(prim_res, dual_res, ax, z, px, aty):
                        rho_updates += 1
                        u = zb + yb / self._rho_cur
                        rho = self._rho_cur
                        accel.reset()
                        fp_best = math.inf
                        plain_x, plain_u = xb, u

        zb = np.minimum(np.maximum(u, ls), us)
        yb = rho * (u - zb)
        self._xbar, self._ybar, self._zbar = xb, yb, zb
        polished = False
        if pol_result is not None:
            x, y, prim_res, dual_res = pol_result
            polished = True
        else:
            x = self.d * xb
            y = self.e * yb / self.cost
            if status == "optimal" and st.polish:
                pol = self._polish(x, y, l_cur, u_cur, prim_res, dual_res)
                if pol is not None:
                    x, y, prim_res, dual_res = pol
                    polished = True
        obj = float(0.5 * x @ (self.p0 @ x) + self.q0 @ x + self.constant)
        if status == "infeasible":
            obj = math.inf
        return QpSolution(
            x=x,
            y=y,
            objective=obj,
            status=status,
            prim_res=prim_res,
            dual_res=dual_res,
            iterations=it,
            polished=polished,
            certificate_residual=cert,
        )

    # ------------------------------------------------------- helper routines
    def _primal_infeasibility(self, dy: np.ndarray, l, u) -> float | None:
        norm = float(np.max(np.abs(dy), initial=0.0))
        if norm < 1e-14:
            return None
        yhat = dy / norm
        eps = self.settings.eps_inf
        cert_res = float(np.max(np.abs(self.a0t @ yhat), initial=0.0))
        if cert_res > eps:
            return None
        pos = np.maximum(yhat, 0.0)
        neg = np.minimum(yhat, 0.0)
        # infinite bounds require a vanishing multiplier on their side
        fin_u = np.isfinite(u)
        fin_l = np.isfinite(l)
        if np.any(pos[~fin_u] > eps) or np.any(-neg[~fin_l] > eps):
            return None
        support = float(pos[fin_u] @ u[fin_u] + neg[fin_l] @ l[fin_l])
        if support <= -eps:
            return cert_res
        return None

    def _maybe_update_rho(self, prim_res, dual_res, ax, z, px, aty) -> bool:
        denom_p = max(
            np.max(np.abs(ax), initial=0.0), np.max(np.abs(z), initial=0.0), 1e-10
        )
        denom_d = max(
            np.max(np.abs(px), initial=0.0),
            np.max(np.abs(aty), initial=0.0),
            np.max(np.abs(self.q0), initial=0.0),
            1e-10,
        )
        ratio = math.sqrt((prim_res / denom_p) / max(dual_res / denom_d, 1e-16))
        thresh = self.settings.adaptive_rho_threshold
        if not (ratio > thresh or ratio < 1.0 / thresh):
            return False
        cap = self.settings.adaptive_rho_max_factor
        adj = min(max(ratio, 1.0 / cap), cap)
        new_scale = min(max(self.rho_scale * adj, 1e-6), 1e6)
        if new_scale == self.rho_scale:
            return False
        self.rho_scale = new_scale
        self._factorize()
        return True

    def _polish(self, x, y, l, u, prim_res, dual_res):
        """Solve the KKT system of the detected active set; accept only if the
        result both improves the residuals and passes a complementarity check
        (guards against mis-detected active sets from warm-start dual noise)."""
        y_tol = 1e-12 * max(1.0, float(np.max(np.abs(y), initial=0.0)))
        eq_rows = np.nonzero(l == u)[0]  # structural equalities and per-call fixings
        low = np.nonzero((l != u) & (y < -y_tol) & np.isfinite(l))[0]
        up = np.nonzero((l != u) & (y > y_tol) & np.isfinite(u))[0]
        act = np.unique(np.concatenate([eq_rows, low, up]))
        if act.size == 0:
            return None
        rhs_act = np.where(y[act] > 0, np.where(np.isfinite(u[act]), u[act], l[act]), l[act])
        rhs_act = np.where(l[act] == u[act], l[act], rhs_act)
        a_act = self.a0[act].tocsr()
        a_act_t = a_act.T.tocsr()
        delta = self.settings.polish_delta
        n_act = act.size
        kkt_reg = sp.bmat(
            [
                [self.p0 + delta * sp.identity(self.n), a_act_t],
                [a_act, -delta * sp.identity(n_act)],
            ],
            format="csc",
        )
        rhs = np.concatenate([-self.q0, rhs_act])
        try:
            lu = spla.splu(kkt_reg)
        except RuntimeError:
            return None
        w = lu.solve(rhs)
        for _ in range(self.settings.polish_refine_iters):
            # residual against the unregularized KKT, computed blockwise
            xw, yw = w[: self.n], w[self.n :]
            r = np.concatenate(
                [
                    -self.q0 - (self.p0 @ xw + a_act_t @ yw),
                    rhs_act - a_act @ xw,
                ]
            )
            w = w + lu.solve(r)
        x_pol = w[: self.n]
        y_pol = np.zeros(self.m)
        y_pol[act] = w[self.n :]
        ax = self.a0 @ x_pol
        z_pol = np.clip(ax, l, u)
        pr = float(np.max(np.abs(ax - z_pol), initial=0.0))
        dr = float(
            np.max(np.abs(self.p0 @ x_pol + self.q0 + self.a0t @ y_pol), initial=0.0)
        )
        if not (np.isfinite(pr) and np.isfinite(dr)):
            return None
        # complementarity: a signed multiplier must sit on its own active bound
        comp_tol = 1e-9 * max(1.0, float(np.max(np.abs(y_pol), initial=0.0)))
        free = l != u
        comp = 0.0
        pos_rows = free & (y_pol > comp_tol)
        neg_rows = free & (y_pol < -comp_tol)
        if np.any(pos_rows & ~np.isfinite(u)) or np.any(neg_rows & ~np.isfinite(l)):
            return None
        if np.any(pos_rows):
            comp = max(comp, float(np.max(np.abs(ax[pos_rows] - u[pos_rows]))))
        if np.any(neg_rows):
            comp = max(comp, float(np.max(np.abs(ax[neg_rows] - l[neg_rows]))))
        if comp > max(10.0 * prim_res, self.settings.eps_abs):
            return None
        if max(pr, dr) < max(prim_res, dual_res):
            return x_pol, y_pol, pr, dr
        return None


def solve_qp(
    problem: MiqpProblem,
    fixings: dict[int, float] | None = None,
    warm_start=None,
    settings: QpSettings | None = None,
) -> QpSolution:
    """Solve the convex relaxation of ``problem`` (binaries in [0,1]).

    ``fixings`` pins individual variables (typically binaries) to values.
    Convenience wrapper that builds a fresh workspace; reuse a BoxQp when
    solving many variations of one problem.
    """
    ws = BoxQp.from_miqp(problem, settings)
    return ws.solve(fixings=fixings, warm_start=warm_start or "cold")
