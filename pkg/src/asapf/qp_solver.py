"""Dense convex QP solver with a verifiable KKT certificate.

Problems have the form::

    minimize    1/2 x'Hx + g'x
    subject to  A_eq x  = b_eq
                A_in x <= b_in
                lo <= x <= hi

Internally all constraints are stacked as ``l <= C x <= u`` rows. A
primal-dual active-set iteration is tried first; if it cycles or stalls, an
ADMM (operator-splitting) run on a Ruiz-equilibrated copy provides a warm
start for a second active-set pass (the usual "polish" step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import Infeasible, MaxIterations

_EQ, _UP, _LO = 0, 1, -1


@dataclass
class QpProblem:
    """Canonical QP data. ``H`` is symmetrized on construction."""

    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self) -> None:
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = H.shape[0]
        if H.shape != (n, n):
            raise ValueError("H must be square")
        self.H = 0.5 * (H + H.T)
        self.g = np.asarray(self.g, dtype=float).reshape(n)
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n)
        self.A_in, self.b_in = _rows(self.A_in, self.b_in, n)
        self.lo = np.full(n, -np.inf) if self.lo is None else np.asarray(self.lo, float).reshape(n)
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, float).reshape(n)
        if np.any(self.lo > self.hi):
            raise Infeasible("variable bounds cross")
        scale = np.abs(self.H).max() if n else 0.0
        if scale > 0.0:
            try:
                np.linalg.cholesky(self.H + 1e-8 * scale * np.eye(n))
            except np.linalg.LinAlgError:
                if np.linalg.eigvalsh(self.H).min() < -1e-8 * scale:
                    raise ValueError("H is not positive semidefinite") from None

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


def _rows(A, b, n):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(A.shape[0])
    return A, b


@dataclass
class KktCertificate:
    stationarity: float
    equality: float
    inequality: float
    bounds: float
    complementarity: float
    dual_sign: float

    def max_residual(self) -> float:
        return max(
            self.stationarity,
            self.equality,
            self.inequality,
            self.bounds,
            self.complementarity,
            self.dual_sign,
        )


@dataclass
class QpSolution:
    x: np.ndarray
    eq_dual: np.ndarray
    in_dual: np.ndarray
    lo_dual: np.ndarray
    hi_dual: np.ndarray
    certificate: KktCertificate
    iterations: int
    method: str
    objective: float = field(default=0.0)


def kkt_certificate(
    p: QpProblem,
    x: np.ndarray,
    eq_dual: np.ndarray,
    in_dual: np.ndarray,
    lo_dual: np.ndarray,
    hi_dual: np.ndarray,
) -> KktCertificate:
    """Residuals of the KKT conditions, computed from the raw problem data."""
    grad = p.H @ x + p.g + p.A_eq.T @ eq_dual + p.A_in.T @ in_dual - lo_dual + hi_dual
    eq_res = p.A_eq @ x - p.b_eq
    in_slack = p.b_in - p.A_in @ x
    lo_gap = np.where(np.isfinite(p.lo), x - p.lo, np.inf)
    hi_gap = np.where(np.isfinite(p.hi), p.hi - x, np.inf)
    comp = 0.0
    if in_dual.size:
        comp = max(comp, float(np.max(np.abs(in_dual * in_slack))))
    fin_lo, fin_hi = np.isfinite(p.lo), np.isfinite(p.hi)
    if fin_lo.any():
        comp = max(comp, float(np.max(np.abs(lo_dual[fin_lo] * lo_gap[fin_lo]))))
    if fin_hi.any():
        comp = max(comp, float(np.max(np.abs(hi_dual[fin_hi] * hi_gap[fin_hi]))))
    # duals on infinite bounds must vanish
    sign = 0.0
    for d, fin in ((in_dual, None), (lo_dual, fin_lo), (hi_dual, fin_hi)):
        if d.size:
            sign = max(sign, float(np.max(np.maximum(-d, 0.0))))
            if fin is not None and (~fin).any():
                sign = max(sign, float(np.max(np.abs(d[~fin]))))
    bnd = 0.0
    if fin_lo.any():
        bnd = max(bnd, float(np.max(np.maximum(-lo_gap[fin_lo], 0.0))))
    if fin_hi.any():
        bnd = max(bnd, float(np.max(np.maximum(-hi_gap[fin_hi], 0.0))))
    return KktCertificate(
        stationarity=float(np.max(np.abs(grad))) if grad.size else 0.0,
        equality=float(np.max(np.abs(eq_res))) if eq_res.size else 0.0,
        inequality=float(np.max(np.maximum(-in_slack, 0.0))) if in_slack.size else 0.0,
        bounds=bnd,
        complementarity=comp,
        dual_sign=sign,
    )


class _Canonical:
    """Stacked ``l <= C x <= u`` view of a :class:`QpProblem`."""

    def __init__(self, p: QpProblem) -> None:
        n = p.n
        self.p = p
        bidx = np.flatnonzero(np.isfinite(p.lo) | np.isfinite(p.hi))
        self.bidx = bidx
        self.n_eq = p.A_eq.shape[0]
        self.n_in = p.A_in.shape[0]
        eye = np.eye(n)[bidx]
        self.C = np.vstack([p.A_eq, p.A_in, eye])
        self.l = np.concatenate([p.b_eq, np.full(self.n_in, -np.inf), p.lo[bidx]])
        self.u = np.concatenate([p.b_eq, p.b_in, p.hi[bidx]])
        self.m = self.C.shape[0]
        self.fixed = np.isclose(self.l, self.u, rtol=0.0, atol=1e-12)

    def split_duals(self, y: np.ndarray):
        p = self.p
        eq = y[: self.n_eq].copy()
        y_in = np.maximum(y[self.n_eq : self.n_eq + self.n_in], 0.0)
        yb = y[self.n_eq + self.n_in :]
        lo_d = np.zeros(p.n)
        hi_d = np.zeros(p.n)
        lo_d[self.bidx] = np.maximum(-yb, 0.0)
        hi_d[self.bidx] = np.maximum(yb, 0.0)
        return eq, y_in, lo_d, hi_d


def _solve_kkt(H: np.ndarray, g: np.ndarray, Cw: np.ndarray, bw: np.ndarray):
    """Equality-constrained QP via a regularized KKT system plus refinement."""
    n = H.shape[0]
    k = Cw.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = Cw.T
    K[n:, :n] = Cw
    rhs = np.concatenate([-g, bw])
    eps = 1e-10 * max(1.0, float(np.abs(H).max()) if n else 1.0)
    Kreg = K.copy()
    Kreg[np.arange(n), np.arange(n)] += eps
    Kreg[n + np.arange(k), n + np.arange(k)] -= eps
    lu = sla.lu_factor(Kreg, check_finite=False)
    sol = sla.lu_solve(lu, rhs, check_finite=False)
    for _ in range(4):
        r = rhs - K @ sol
        if np.max(np.abs(r), initial=0.0) < 1e-13 * max(1.0, np.max(np.abs(rhs), initial=0.0)):
            break
        sol = sol + sla.lu_solve(lu, r, check_finite=False)
    return sol[:n], sol[n:]


def _drop_dependent(C: np.ndarray, eq_rows: list[int], working: dict[int, int], rtol: float = 1e-10) -> None:
    """Remove working rows that are linearly dependent on the equalities and
    the other working rows (degenerate vertices)."""
    if not working:
        return
    idx = sorted(working)
    W = C[idx]
    if eq_rows:
        Q, _ = np.linalg.qr(C[eq_rows].T)
        W = W - (W @ Q) @ Q.T
    if len(idx) + len(eq_rows) <= C.shape[1] and np.linalg.matrix_rank(W, tol=rtol * max(1.0, np.abs(W).max())) == len(idx):
        return
    _, R, piv = sla.qr(W.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    keep = d > rtol * max(1.0, d[0] if len(d) else 1.0)
    for k in piv[len(d):]:
        del working[idx[k]]
    for k, ok in zip(piv[: len(d)], keep):
        if not ok:
            del working[idx[k]]


def _active_set(cp: _Canonical, working: dict[int, int], tol: float, max_iter: int):
    """Primal-dual active-set iteration; returns (x, y, iterations) or None."""
    p = cp.p
    C, l, u = cp.C, cp.l, cp.u
    eq_rows = [i for i in range(cp.m) if cp.fixed[i]]
    seen: set[frozenset] = set()
    careful = False
    feas_tol = 0.1 * tol
    for it in range(1, max_iter + 1):
        _drop_dependent(C, eq_rows, working)
        rows = eq_rows + sorted(working)
        Cw = C[rows]
        bw = np.array(
            [l[i] if (cp.fixed[i] or working.get(i) == _LO) else u[i] for i in rows], dtype=float
        )
        x, lam = _solve_kkt(p.H, p.g, Cw, bw)
        y = np.zeros(cp.m)
        y[rows] = lam
        Cx = C @ x
        over = Cx - u
        under = l - Cx
        inactive = np.ones(cp.m, dtype=bool)
        inactive[rows] = False
        viol_up = np.flatnonzero(inactive & (over > feas_tol))
        viol_lo = np.flatnonzero(inactive & (under > feas_tol))
        wrong = [i for i, side in working.items() if side * y[i] < -feas_tol]
        if not len(viol_up) and not len(viol_lo) and not wrong:
            return x, y, it
        key = frozenset(working.items())
        if key in seen:
            careful = True
        seen.add(key)
        if careful:
            # one change at a time: most violated row first, else worst multiplier
            worst_v, worst_i, worst_side = 0.0, -1, 0
            for i in viol_up:
                if over[i] > worst_v:
                    worst_v, worst_i, worst_side = over[i], i, _UP
            for i in viol_lo:
                if under[i] > worst_v:
                    worst_v, worst_i, worst_side = under[i], i, _LO
            if worst_i >= 0:
                working[int(worst_i)] = worst_side
            else:
                drop = min(wrong, key=lambda i: working[i] * y[i])
                del working[drop]
        else:
            for i in wrong:
                del working[i]
            for i in viol_up:
                working[int(i)] = _UP
            for i in viol_lo:
                working[int(i)] = _LO
    return None


class _Scaled:
    """Ruiz-equilibrated copy of a canonical problem for the ADMM run:
    x = D xs, rows scaled by E and the cost by c."""

    def __init__(self, cp: _Canonical, passes: int = 15) -> None:
        H, g, C = cp.p.H, cp.p.g, cp.C
        n, m = H.shape[0], cp.m
        D, E = np.ones(n), np.ones(m)
        Hs, Cs = H.copy(), C.copy()
        for _ in range(passes):
            col = np.maximum(np.max(np.abs(Hs), axis=0, initial=0.0), np.max(np.abs(Cs), axis=0, initial=0.0))
            row = np.max(np.abs(Cs), axis=1, initial=0.0)
            dd = 1.0 / np.sqrt(np.where(col > 1e-12, col, 1.0))
            ee = 1.0 / np.sqrt(np.where(row > 1e-12, row, 1.0))
            Hs = dd[:, None] * Hs * dd[None, :]
            Cs = ee[:, None] * Cs * dd[None, :]
            D, E = D * dd, E * ee
        gs = D * g
        c = 1.0 / max(float(np.mean(np.max(np.abs(Hs), axis=0, initial=0.0))), float(np.max(np.abs(gs), initial=0.0)), 1e-12)
        self.D, self.E, self.c = D, E, c
        self.p = QpProblem(c * Hs, c * gs)
        self.C = Cs
        self.l = E * cp.l
        self.u = E * cp.u
        self.m = m
        self.fixed = cp.fixed

    def unscale(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.D * x, self.E * y / self.c


class _Admm:
    def __init__(self, cp: _Canonical, rho: float = 0.1, sigma: float = 1e-6, alpha: float = 1.6):
        self.cp = cp
        self.sigma = sigma
        self.alpha = alpha
        self.rho0 = rho
        self.x = np.zeros(cp.p.n)
        self.z = np.clip(np.zeros(cp.m), cp.l, cp.u)
        self.y = np.zeros(cp.m)
        self._set_rho(rho)

    def _set_rho(self, rho: float) -> None:
        cp = self.cp
        self.rho_scalar = rho
        self.rho = np.where(cp.fixed, 1e3 * rho, rho)
        M = cp.p.H + self.sigma * np.eye(cp.p.n) + cp.C.T @ (self.rho[:, None] * cp.C)
        self.factor = sla.cho_factor(M, check_finite=False)

    def step(self) -> None:
        cp = self.cp
        rhs = self.sigma * self.x - cp.p.g + cp.C.T @ (self.rho * self.z - self.y)
        xt = sla.cho_solve(self.factor, rhs, check_finite=False)
        zt = cp.C @ xt
        a = self.alpha
        self.x = a * xt + (1 - a) * self.x
        zr = a * zt + (1 - a) * self.z
        z_new = np.clip(zr + self.y / self.rho, cp.l, cp.u)
        self.y = self.y + self.rho * (zr - z_new)
        self.z = z_new

    def residuals(self):
        cp = self.cp
        Cx = cp.C @ self.x
        r_prim = float(np.max(np.abs(Cx - self.z), initial=0.0))
        Hx = cp.p.H @ self.x
        Cty = cp.C.T @ self.y
        r_dual = float(np.max(np.abs(Hx + cp.p.g + Cty), initial=0.0))
        prim_scale = max(np.max(np.abs(Cx), initial=0.0), np.max(np.abs(self.z), initial=0.0), 1e-12)
        dual_scale = max(
            np.max(np.abs(Hx), initial=0.0),
            np.max(np.abs(Cty), initial=0.0),
            np.max(np.abs(cp.p.g), initial=0.0),
            1e-12,
        )
        return r_prim, r_dual, prim_scale, dual_scale

    def guess_working(self) -> dict[int, int]:
        cp = self.cp
        w: dict[int, int] = {}
        for i in range(cp.m):
            if cp.fixed[i]:
                continue
            if self.z[i] - cp.l[i] < -self.y[i]:
                w[i] = _LO
            elif cp.u[i] - self.z[i] < self.y[i]:
                w[i] = _UP
        return w

    def infeasibility_certificate(self, dy: np.ndarray, eps: float = 1e-5) -> bool:
        cp = self.cp
        norm = np.max(np.abs(dy), initial=0.0)
        if norm < 1e-12:
            return False
        d = dy / norm
        if np.max(np.abs(cp.C.T @ d), initial=0.0) > eps:
            return False
        pos, neg = np.maximum(d, 0.0), np.minimum(d, 0.0)
        if np.any((pos > eps) & ~np.isfinite(cp.u)) or np.any((neg < -eps) & ~np.isfinite(cp.l)):
            return False
        u_fin = np.where(np.isfinite(cp.u), cp.u, 0.0)
        l_fin = np.where(np.isfinite(cp.l), cp.l, 0.0)
        return float(u_fin @ pos + l_fin @ neg) < -eps


def solve_qp(p: QpProblem, tol: float = 1e-6, max_iter: int = 5000) -> QpSolution:
    """Solve ``p`` and return the solution with its KKT certificate.

    Raises :class:`Infeasible` when ADMM produces a primal infeasibility
    certificate and :class:`MaxIterations` when no certified point is found.
    """
    cp = _Canonical(p)

    def finish(x, y, iters, method):
        eq, y_in, lo_d, hi_d = cp.split_duals(y)
        cert = kkt_certificate(p, x, eq, y_in, lo_d, hi_d)
        return QpSolution(x, eq, y_in, lo_d, hi_d, cert, iters, method, p.objective(x))

    budget = min(max(30, 2 * cp.m), 200)
    res = _active_set(cp, {}, tol, budget)
    if res is not None:
        sol = finish(*res, "active-set")
        if sol.certificate.max_residual() <= tol:
            return sol

    sc = _Scaled(cp)
    admm = _Admm(sc)
    y_check = admm.y.copy()
    best = None
    for k in range(1, max_iter + 1):
        admm.step()
        if k % 25 == 0:
            r_prim, r_dual, ps, ds = admm.residuals()
            dy = admm.y - y_check
            y_check = admm.y.copy()
            if admm.infeasibility_certificate(dy):
                raise Infeasible("primal infeasibility certificate from ADMM")
            ratio = np.sqrt((r_prim / ps) / max(r_dual / ds, 1e-30))
            new_rho = float(np.clip(admm.rho_scalar * ratio, 1e-6, 1e6))
            if new_rho > 5 * admm.rho_scalar or new_rho < 0.2 * admm.rho_scalar:
                admm._set_rho(new_rho)
            if r_prim < 1e-3 * max(1.0, ps) and r_dual < 1e-3 * max(1.0, ds) and k % 50 == 0:
                res = _active_set(cp, admm.guess_working(), tol, 50)
                if res is not None:
                    sol = finish(res[0], res[1], k + res[2], "admm+polish")
                    if sol.certificate.max_residual() <= tol:
                        return sol
                    best = sol
    if best is not None:
        raise MaxIterations(
            f"no certified solution; best KKT residual {best.certificate.max_residual():.2e}"
        )
    raise MaxIterations(f"ADMM did not converge in {max_iter} iterations")
