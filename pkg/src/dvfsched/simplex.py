"""Dense bounded revised simplex.

Solves ``min c@x`` subject to row constraints ``A@x (<=|==|>=) b`` and
``lb <= x <= ub``. Every row gets a logical (slack) column so the working
system is ``[A I] (x, s) = b`` with bounded slacks; rows whose initial slack
would be infeasible get an artificial column and phase 1 drives those to
zero. The basis inverse is kept explicitly with product-form updates and
refactored periodically, which is fine for the few hundred rows of a
desk-scale model.

Pricing is Dantzig's rule; after a run of degenerate pivots the method
switches to Bland's smallest-index rule until progress resumes. The ratio
test is Harris' two-pass test with a small bound relaxation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_BASIC, _AT_LB, _AT_UB, _FREE, _FIXED = 0, 1, 2, 3, 4


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


class _Numerical(Exception):
    pass


class _Tableau:
    def __init__(self, cols, b, lo, hi, feas_tol, opt_tol, max_iter):
        self.cols = cols
        self.b = b
        self.lo = lo
        self.hi = hi
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.max_iter = max_iter
        self.iterations = 0
        self.refactor_every = 40

    def refactor(self):
        B = self.cols[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise _Numerical("singular basis") from exc
        if not np.all(np.isfinite(self.Binv)):
            raise _Numerical("non-finite basis inverse")
        nb = self.state != _BASIC
        rhs = self.b - self.cols[:, nb] @ self.x[nb]
        self.x[self.basis] = self.Binv @ rhs

    def run(self, cost) -> str:
        m = len(self.basis)
        lo, hi = self.lo, self.hi
        harris = 1e-9
        piv_tol = 1e-9
        degenerate = 0
        bland = False
        since_refactor = 0
        self.refactor()
        while True:
            if self.iterations >= self.max_iter:
                return "limit"
            if since_refactor >= self.refactor_every:
                self.refactor()
                since_refactor = 0
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.cols
            st = self.state
            inc = ((st == _AT_LB) | (st == _FREE)) & (d < -self.opt_tol)
            dec = ((st == _AT_UB) | (st == _FREE)) & (d > self.opt_tol)
            cand = inc | dec
            if not cand.any():
                return "optimal"
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                score = np.where(cand, np.abs(d), -1.0)
                q = int(np.argmax(score))
            dirn = 1.0 if inc[q] else -1.0
            alpha = self.Binv @ self.cols[:, q]
            delta = -dirn * alpha
            xB = self.x[self.basis]
            loB = lo[self.basis]
            hiB = hi[self.basis]

            neg = delta < -piv_tol
            pos = delta > piv_tol
            t_relax = np.full(m, np.inf)
            with np.errstate(invalid="ignore", divide="ignore"):
                t_relax[neg] = (xB[neg] - loB[neg] + harris) / -delta[neg]
                t_relax[pos] = (hiB[pos] - xB[pos] + harris) / delta[pos]
            t_max = t_relax.min() if m else np.inf
            t_flip = hi[q] - lo[q]

            if t_flip <= t_max and np.isfinite(t_flip):
                t = t_flip
                leave = -1
            elif not np.isfinite(t_max):
                return "unbounded"
            else:
                t_exact = np.full(m, np.inf)
                with np.errstate(invalid="ignore", divide="ignore"):
                    t_exact[neg] = (xB[neg] - loB[neg]) / -delta[neg]
                    t_exact[pos] = (hiB[pos] - xB[pos]) / delta[pos]
                eligible = (neg | pos) & (t_exact <= t_max)
                if bland:
                    ties = np.flatnonzero(eligible)
                    leave = int(ties[np.argmin(self.basis[ties])])
                else:
                    leave = int(np.argmax(np.where(eligible, np.abs(delta), -1.0)))
                t = max(float(t_exact[leave]), 0.0)

            if t <= 1e-12:
                degenerate += 1
                if degenerate > 25:
                    bland = True
            else:
                degenerate = 0
                bland = False

            self.x[self.basis] = xB + delta * t
            self.x[q] += dirn * t
            if leave < 0:
                st[q] = _AT_UB if dirn > 0 else _AT_LB
                self.x[q] = hi[q] if dirn > 0 else lo[q]
            else:
                out = self.basis[leave]
                if lo[out] == hi[out]:
                    st[out], self.x[out] = _FIXED, lo[out]
                elif delta[leave] < 0:
                    st[out], self.x[out] = _AT_LB, lo[out]
                else:
                    st[out], self.x[out] = _AT_UB, hi[out]
                piv = alpha[leave]
                if abs(piv) < 1e-11:
                    raise _Numerical("tiny pivot")
                row = self.Binv[leave] / piv
                self.Binv -= np.outer(alpha, row)
                self.Binv[leave] = row
                self.basis[leave] = q
                st[q] = _BASIC
                since_refactor += 1
            self.iterations += 1


def solve(c, A, senses, b, lb, ub, feas_tol: float = 1e-7, opt_tol: float = 1e-7,
          max_iter: int | None = None) -> LPResult:
    """Solve a bounded LP given in dense array form."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, len(c))
    b = np.asarray(b, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m, n = A.shape
    if np.any(lb > ub + feas_tol):
        return LPResult("infeasible", None, np.nan, 0)
    senses = list(senses)
    sl = np.array([0.0 if s != ">=" else -np.inf for s in senses])
    su = np.array([np.inf if s == "<=" else 0.0 for s in senses])

    x0 = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    state = np.where(np.isfinite(lb), _AT_LB, np.where(np.isfinite(ub), _AT_UB, _FREE))
    state = np.where(lb == ub, _FIXED, state)
    r = b - A @ x0

    art_rows = [i for i in range(m)
                if r[i] < sl[i] - feas_tol or r[i] > su[i] + feas_tol]
    k = len(art_rows)
    cols = np.zeros((m, n + m + k), order="F")
    cols[:, :n] = A
    cols[:, n:n + m] = np.eye(m)
    lo = np.concatenate([lb, sl, np.zeros(k)])
    hi = np.concatenate([ub, su, np.full(k, np.inf)])
    x = np.concatenate([x0, np.zeros(m + k)])
    st = np.concatenate([state, np.full(m + k, _BASIC)])
    basis = np.arange(n, n + m)
    for a, i in enumerate(art_rows):
        v = min(max(r[i], sl[i]), su[i])
        sign = 1.0 if r[i] - v > 0 else -1.0
        cols[i, n + m + a] = sign
        j = n + i
        x[j] = v
        st[j] = _FIXED if sl[i] == su[i] else (_AT_LB if v == sl[i] else _AT_UB)
        basis[i] = n + m + a
        st[n + m + a] = _BASIC
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    tab = _Tableau(cols, b, lo, hi, feas_tol, opt_tol, max_iter)
    tab.basis, tab.state, tab.x = basis, st, x
    try:
        if k:
            cost1 = np.zeros(n + m + k)
            cost1[n + m:] = 1.0
            status = tab.run(cost1)
            if status == "limit":
                return LPResult("limit", None, np.nan, tab.iterations)
            tab.refactor()
            infeas = float(tab.x[n + m:].sum())
            if infeas > feas_tol * (1.0 + np.abs(b).max(initial=0.0)):
                return LPResult("infeasible", None, np.nan, tab.iterations)
            tab.hi[n + m:] = 0.0
            for a in range(k):
                j = n + m + a
                if tab.state[j] != _BASIC:
                    tab.state[j] = _FIXED
                    tab.x[j] = 0.0
        cost2 = np.concatenate([c, np.zeros(m + k)])
        status = tab.run(cost2)
        tab.refactor()
    except _Numerical:
        return LPResult("numerical", None, np.nan, tab.iterations)
    if status != "optimal":
        return LPResult(status, None, np.nan, tab.iterations)
    xs = tab.x[:n].copy()
    slack_viol = np.maximum(tab.lo - tab.x, tab.x - tab.hi).max(initial=0.0)
    if slack_viol > 10 * feas_tol * (1.0 + np.abs(b).max(initial=0.0)):
        return LPResult("numerical", None, np.nan, tab.iterations)
    return LPResult("optimal", xs, float(c @ xs), tab.iterations)
