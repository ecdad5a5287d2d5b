"""Quadratic programs with diagonal Hessian and one-sided inequalities.

Problems have the form

    minimize   0.5 U' H U + q' U
    subject to A U + b >= 0

with H strictly positive diagonal.  Two solvers are provided:

``solve_sparse``
    Operator-splitting (ADMM) iteration on a sparse, scaled reformulation
    with a cached sparse KKT factorization, followed by an active-set
    polish solve so the returned primal/dual pair satisfies the KKT
    conditions to near machine precision.  Per-iteration cost is linear in
    the number of stored nonzeros.  The penalty parameter is fixed, the
    iteration deterministic, and warm starting is supported.

``solve_dense_reference``
    An independent dense active-set method on the dual

        minimize_{lam >= 0}  0.5 lam' M lam + c' lam,
        M = A H^-1 A',  c = b - A H^-1 q,

    whose gradient M lam + c equals the primal constraint values, solved in
    the style of the classic non-negative least-squares algorithm.  Slow but
    exact; used as the oracle in tests and never on the hot path.

Duals follow the convention lam >= 0 with stationarity H U + q = A' lam.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

__all__ = [
    "QPProblem",
    "QPSolution",
    "kkt_residuals",
    "solve_sparse",
    "solve_dense_reference",
]


@dataclass
class QPProblem:
    hessian_diag: np.ndarray
    linear: np.ndarray
    A: sp.spmatrix
    b: np.ndarray

    def __post_init__(self):
        self.hessian_diag = np.asarray(self.hessian_diag, dtype=float).ravel()
        self.linear = np.asarray(self.linear, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        if not sp.issparse(self.A):
            self.A = sp.csr_matrix(np.atleast_2d(np.asarray(self.A, dtype=float)))
        self.A = self.A.tocsr()
        n = self.hessian_diag.shape[0]
        if self.linear.shape[0] != n:
            raise ValueError("linear term size mismatch")
        if self.A.shape != (self.b.shape[0], n):
            raise ValueError("constraint block shape mismatch")
        if np.any(self.hessian_diag <= 0.0) or not np.all(np.isfinite(self.hessian_diag)):
            raise ValueError("hessian diagonal must be strictly positive")

    @classmethod
    def from_desired(cls, hessian_diag, desired, A, b) -> "QPProblem":
        """Objective 0.5 (U - desired)' H (U - desired) up to a constant."""
        hd = np.asarray(hessian_diag, dtype=float)
        return cls(hd, -hd * np.asarray(desired, dtype=float), A, b)

    @property
    def n_vars(self) -> int:
        return self.hessian_diag.shape[0]

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]


@dataclass
class QPSolution:
    primal: np.ndarray
    dual: np.ndarray
    status: str  # "optimal" | "max_iters" | "infeasible"
    iterations: int
    primal_residual: float
    dual_residual: float
    polished: bool = False
    info: dict = field(default_factory=dict)


def kkt_residuals(problem: QPProblem, primal, dual):
    """(primal, dual, complementarity) infinity-norm residuals."""
    u = np.asarray(primal, dtype=float)
    lam = np.asarray(dual, dtype=float)
    vals = problem.A @ u + problem.b
    r_prim = float(np.max(np.maximum(-vals, 0.0), initial=0.0))
    stat = problem.hessian_diag * u + problem.linear - problem.A.T @ lam
    r_dual = float(np.max(np.abs(stat), initial=0.0))
    r_comp = float(np.max(np.abs(lam * vals), initial=0.0))
    return r_prim, r_dual, r_comp


def _unconstrained(problem: QPProblem) -> QPSolution:
    u = -problem.linear / problem.hessian_diag
    return QPSolution(
        primal=u,
        dual=np.zeros(problem.n_rows),
        status="optimal",
        iterations=0,
        primal_residual=0.0,
        dual_residual=0.0,
        polished=True,
    )


# ---------------------------------------------------------------------------
# polish: exact KKT solve on a guessed active set


def _polish(problem: QPProblem, u, lam, act_eps: float, dense_a=None):
    """Solve the equality-constrained KKT system on the active-set guess.

    Returns (u, lam) or None.  Active rows are eliminated through the
    diagonal Hessian; the small dense Schur system is solved by Cholesky,
    falling back to a minimum-norm least-squares solve when duplicated
    rows (a degenerate active set) make it singular.  The active set
    settles through drop/add rounds; if it is still moving when the round
    budget runs out, the last iterate is returned anyway and the caller's
    residual check decides.
    """
    h = problem.hessian_diag
    q = problem.linear
    b = problem.b
    m = problem.n_rows
    A = dense_a if dense_a is not None else problem.A.toarray()
    scale_b = float(np.max(np.abs(b), initial=0.0)) + 1.0

    vals = A @ u + b
    act = (lam > 1e-12) | (vals < act_eps * scale_b)

    lam_out = np.zeros(m)
    u_new = None
    mu = np.zeros(0)
    for _ in range(25):
        act_idx = np.flatnonzero(act)
        if act_idx.size == 0:
            u_new = -q / h
            mu = np.zeros(0)
        else:
            sub = A[act_idx]
            aht = sub / h[None, :]  # A_act H^-1
            S = aht @ sub.T
            rhs = aht @ q - b[act_idx]
            # duplicated active rows (slack bound + zero-gradient barrier)
            # make S singular; a hair of regularization keeps Cholesky
            # viable and refinement against the exact S restores accuracy
            eps_reg = 1e-12 * (float(np.max(np.abs(np.diagonal(S)))) + 1.0)
            try:
                cho = np.linalg.cholesky(S + eps_reg * np.eye(S.shape[0]))

                def solve(v, cho=cho):
                    return np.linalg.solve(cho.T, np.linalg.solve(cho, v))

            except np.linalg.LinAlgError:

                def solve(v, S=S):
                    return np.linalg.lstsq(S, v, rcond=None)[0]

            mu = solve(rhs)
            for _ in range(2):
                mu = mu + solve(rhs - S @ mu)
            u_new = (-q + sub.T @ mu) / h

        changed = False
        if act_idx.size:
            neg = mu < -1e-11
            if np.any(neg):
                act[act_idx[neg]] = False
                changed = True
        vals_new = A @ u_new + b
        viol = (vals_new < -1e-11 * scale_b) & ~act
        if np.any(viol) and not changed:
            act[viol] = True
            changed = True
        if not changed:
            break

    if u_new is None:
        return None
    lam_out[:] = 0.0
    act_idx = np.flatnonzero(act)
    if act_idx.size and mu.shape[0] == act_idx.size:
        lam_out[act_idx] = np.maximum(mu, 0.0)
    return u_new, lam_out


# ---------------------------------------------------------------------------
# sparse operator-splitting solver


def solve_sparse(
    problem: QPProblem,
    tol: float = 1e-6,
    max_iters: int = 4000,
    warm_start: QPSolution | None = None,
    rho: float = 0.1,
    sigma: float = 1e-6,
    relax: float = 1.6,
) -> QPSolution:
    """Deterministic ADMM iteration with fixed penalty, then polish.

    The problem is scaled so the Hessian becomes the identity (column
    scaling D = H^-1/2) and constraint rows get unit infinity norm (row
    scaling E).  One sparse KKT factorization is reused for all iterations.
    """
    m, n = problem.n_rows, problem.n_vars
    if m == 0:
        return _unconstrained(problem)

    h = problem.hessian_diag
    q = problem.linear
    d_scale = 1.0 / np.sqrt(h)
    a_cols = problem.A @ sp.diags(d_scale)
    row_norm = np.abs(a_cols).max(axis=1).toarray().ravel()
    e_scale = 1.0 / np.maximum(row_norm, 1e-10)
    a_hat = (sp.diags(e_scale) @ a_cols).tocsc()
    q_hat = d_scale * q
    lower = -(e_scale * problem.b)

    kkt = sp.bmat(
        [
            [sp.diags(np.full(n, 1.0 + sigma)), a_hat.T],
            [a_hat, -sp.diags(np.full(m, 1.0 / rho))],
        ],
        format="csc",
    )
    lu = splu(kkt)

    if warm_start is not None and warm_start.primal.shape[0] == n and warm_start.dual.shape[0] == m:
        x = warm_start.primal / d_scale
        y = -(warm_start.dual / e_scale)
        z = a_hat @ x
    else:
        x = np.zeros(n)
        y = np.zeros(m)
        z = np.zeros(m)

    scale_b = float(np.max(np.abs(problem.b), initial=0.0)) + 1.0
    scale_q = float(np.max(np.abs(q), initial=0.0)) + 1.0
    eps_admm = 0.1 * tol
    polish_tries = 0
    best: tuple[float, np.ndarray, np.ndarray] | None = None
    y_prev = y.copy()
    inv_rho = 1.0 / rho

    def candidate():
        u = d_scale * x
        lam = np.maximum(-(e_scale * y), 0.0)
        return u, lam

    dense_a: np.ndarray | None = None

    def try_finish(it):
        nonlocal dense_a
        if dense_a is None:
            dense_a = problem.A.toarray()
        u, lam = candidate()
        for act_eps in (1e-7, 1e-6, 1e-5):
            res = _polish(problem, u, lam, act_eps, dense_a=dense_a)
            if res is None:
                continue
            up, lp = res
            rp, rd, rc = kkt_residuals(problem, up, lp)
            if rp <= 1e-9 * scale_b and rd <= 1e-9 * scale_q * 10 and rc <= 1e-8 * scale_b * 10:
                return QPSolution(up, lp, "optimal", it, rp, rd, polished=True)
        return None

    it = 0
    while it < max_iters:
        it += 1
        rhs = np.concatenate([sigma * x - q_hat, z - inv_rho * y])
        sol = lu.solve(rhs)
        x_t = sol[:n]
        nu = sol[n:]
        z_t = z + inv_rho * (nu - y)
        x = relax * x_t + (1.0 - relax) * x
        z_arg = relax * z_t + (1.0 - relax) * z + inv_rho * y
        z_new = np.maximum(z_arg, lower)
        y_prev, y = y, y + rho * (relax * z_t + (1.0 - relax) * z - z_new)
        z = z_new

        if it % 10 == 0 or it == 5:
            u, lam = candidate()
            rp, rd, _ = kkt_residuals(problem, u, lam)
            gap = max(rp / scale_b, rd / scale_q)
            if best is None or gap < best[0]:
                best = (gap, u, lam)
            if gap <= eps_admm:
                done = try_finish(it)
                if done is not None:
                    return done
                polish_tries += 1
                if polish_tries >= 3:
                    # polish keeps declining (degenerate active set); the raw
                    # iterate already meets the requested tolerance
                    return QPSolution(u, lam, "optimal", it, rp, rd, polished=False)

            dy = y - y_prev
            norm_dy = float(np.max(np.abs(dy)))
            if norm_dy > 1e-12:
                at_dy = float(np.max(np.abs(a_hat.T @ dy)))
                support = float(lower @ np.minimum(dy, 0.0))
                if (
                    float(np.max(dy)) <= 1e-8 * norm_dy
                    and at_dy <= 1e-8 * norm_dy
                    and support < -1e-10 * norm_dy
                ):
                    u, lam = candidate()
                    rp, rd, _ = kkt_residuals(problem, u, lam)
                    return QPSolution(u, lam, "infeasible", it, rp, rd)

    if best is not None:
        u, lam = best[1], best[2]
    else:
        u, lam = candidate()
    rp, rd, _ = kkt_residuals(problem, u, lam)
    return QPSolution(u, lam, "max_iters", it, rp, rd)


# ---------------------------------------------------------------------------
# dense reference solver (oracle)


def solve_dense_reference(problem: QPProblem, tol: float = 1e-11) -> QPSolution:
    """Active-set method on the dual; exact inner solves, no warm start."""
    m, n = problem.n_rows, problem.n_vars
    if m == 0:
        return _unconstrained(problem)
    h = problem.hessian_diag
    q = problem.linear
    a_dense = problem.A.toarray()
    u0 = -q / h
    big_m = (a_dense / h[None, :]) @ a_dense.T
    c = problem.b + a_dense @ u0
    scale_c = float(np.max(np.abs(c), initial=0.0)) + 1.0

    lam = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    max_outer = 50 * m + 100

    def primal_from(lam_vec):
        return u0 + (a_dense.T @ lam_vec) / h

    for _ in range(max_outer):
        grad = big_m @ lam + c  # equals A u(lam) + b
        cand = np.where(~passive, grad, np.inf)
        j = int(np.argmin(cand))
        if cand[j] >= -tol * scale_c:
            u = primal_from(lam)
            rp, rd, _ = kkt_residuals(problem, u, lam)
            return QPSolution(u, lam, "optimal", 0, rp, rd, polished=True)
        passive[j] = True

        for _ in range(50 * m + 50):
            p_idx = np.flatnonzero(passive)
            sub = big_m[np.ix_(p_idx, p_idx)]
            rhs = -c[p_idx]
            lam_p, _, rank, _ = np.linalg.lstsq(sub, rhs, rcond=None)
            resid = sub @ lam_p - rhs
            if float(np.max(np.abs(resid))) > 1e-7 * scale_c:
                # inconsistent stationarity system: look for a Farkas ray
                _, s, vt = np.linalg.svd(sub)
                null = vt[s < 1e-10 * (s[0] if s.size else 1.0) + 1e-300]
                for ray in np.vstack([null, -null]) if null.size else []:
                    if np.all(ray >= -1e-9) and c[p_idx] @ ray < -1e-9 * scale_c:
                        full = np.zeros(m)
                        full[p_idx] = np.maximum(ray, 0.0)
                        u = primal_from(lam)
                        rp, rd, _ = kkt_residuals(problem, u, lam)
                        return QPSolution(
                            u, lam, "infeasible", 0, rp, rd, info={"ray": full}
                        )
            if np.all(lam_p >= -1e-12):
                lam[:] = 0.0
                lam[p_idx] = np.maximum(lam_p, 0.0)
                break
            old = lam[p_idx]
            shrink = lam_p < -1e-12
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(shrink, old / (old - lam_p), np.inf)
            alpha = float(np.min(ratios))
            stepped = old + alpha * (lam_p - old)
            stepped[shrink & (ratios <= alpha + 1e-15)] = 0.0
            lam[p_idx] = np.maximum(stepped, 0.0)
            passive[p_idx] = lam[p_idx] > 0.0
        else:
            break

    u = primal_from(lam)
    rp, rd, _ = kkt_residuals(problem, u, lam)
    # unbounded dual growth doubles as an infeasibility signal
    if float(np.max(np.abs(lam))) > 1e11 * scale_c:
        return QPSolution(u, lam, "infeasible", 0, rp, rd)
    return QPSolution(u, lam, "max_iters", 0, rp, rd)
