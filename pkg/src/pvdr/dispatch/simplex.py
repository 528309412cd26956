"""Bounded-variable dual simplex on a dense explicit basis inverse.

Solves ``min c @ x`` subject to ``row_lo <= A @ x <= row_hi`` and
``col_lo <= x <= col_hi`` with every bound finite. One logical variable per
row turns the rows into ``A x - w = 0``; the all-logical basis with each
structural at the bound favoured by its cost is dual feasible, so no phase
one is needed. Bound changes between branch-and-bound nodes keep the parent
basis dual feasible, which is what makes the warm start cheap.
"""
from dataclasses import dataclass

import numpy as np

PRIMAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50
STALL_LIMIT = 60


@dataclass
class LPResult:
    status: str              # optimal | infeasible | iteration_limit
    x: np.ndarray
    objective: float
    basic: np.ndarray
    at_upper: np.ndarray
    binv: np.ndarray
    iterations: int


class DualSimplex:
    """LP with fixed ``A``, ``c`` and row bounds; column bounds vary per solve."""

    def __init__(self, A, c, row_lo, row_hi):
        self.A = np.ascontiguousarray(A, dtype=float)
        self.m, self.n = self.A.shape
        self.c = np.asarray(c, dtype=float)
        self.row_lo = np.asarray(row_lo, dtype=float)
        self.row_hi = np.asarray(row_hi, dtype=float)
        if self.c.shape != (self.n,) or self.row_lo.shape != (self.m,) or self.row_hi.shape != (self.m,):
            raise ValueError("dimension mismatch")
        if not (np.isfinite(self.row_lo).all() and np.isfinite(self.row_hi).all()):
            raise ValueError("row bounds must be finite")
        self.cost = np.concatenate([self.c, np.zeros(self.m)])

    def column(self, j):
        if j < self.n:
            return self.A[:, j]
        e = np.zeros(self.m)
        e[j - self.n] = -1.0
        return e

    def basis_matrix(self, basic):
        return np.stack([self.column(j) for j in basic], axis=1)

    def initial_basis(self):
        return np.arange(self.n, self.n + self.m), np.zeros(self.n + self.m, dtype=bool)

    def _basic_values(self, z, basic, binv):
        zn = z.copy()
        zn[basic] = 0.0
        return -binv @ (self.A @ zn[:self.n] - zn[self.n:])

    def _reduced_costs(self, basic, binv):
        y = self.cost[basic] @ binv
        return np.concatenate([self.c - y @ self.A, y])

    def solve(self, col_lo, col_hi, basic=None, at_upper=None, binv=None, max_iter=20000):
        """Optimise from the given basis (the slack basis when omitted)."""
        n, m = self.n, self.m
        lo = np.concatenate([np.asarray(col_lo, dtype=float), self.row_lo])
        hi = np.concatenate([np.asarray(col_hi, dtype=float), self.row_hi])
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("column bounds must be finite")
        if (lo > hi).any():
            return LPResult("infeasible", np.zeros(n), np.inf, basic, at_upper, binv, 0)
        if basic is None:
            basic, at_upper = self.initial_basis()
            binv = -np.eye(m)
        else:
            basic = np.array(basic)
            at_upper = np.array(at_upper)
            binv = np.linalg.inv(self.basis_matrix(basic)) if binv is None else binv.copy()
        fixed = lo == hi
        is_basic = np.zeros(n + m, dtype=bool)
        is_basic[basic] = True

        d = self._reduced_costs(basic, binv)
        # restore dual feasibility by moving boxed nonbasics to the right bound
        nb = ~is_basic & ~fixed
        at_upper = np.where(nb & (d < 0), True, np.where(nb & (d > 0), False, at_upper))
        z = np.where(at_upper, hi, lo)
        z[basic] = self._basic_values(z, basic, binv)

        best_obj, stall, bland = -np.inf, 0, False
        for it in range(max_iter):
            if it and it % REFACTOR_EVERY == 0:
                binv = np.linalg.inv(self.basis_matrix(basic))
                d = self._reduced_costs(basic, binv)
                z[basic] = self._basic_values(z, basic, binv)
            zb = z[basic]
            up = zb - hi[basic]
            down = lo[basic] - zb
            viol = np.maximum(up, down)
            if bland:
                cand = np.flatnonzero(viol > PRIMAL_TOL)
                if cand.size == 0:
                    return self._done("optimal", z, basic, at_upper, binv, it)
                r = cand[np.argmin(basic[cand])]
            else:
                r = int(np.argmax(viol))
                if viol[r] <= PRIMAL_TOL:
                    return self._done("optimal", z, basic, at_upper, binv, it)
            to_upper = up[r] > down[r]
            rho = binv[r]
            alpha = np.concatenate([rho @ self.A, -rho])
            if to_upper:
                ok = (~at_upper & (alpha > PIVOT_TOL)) | (at_upper & (alpha < -PIVOT_TOL))
            else:
                ok = (~at_upper & (alpha < -PIVOT_TOL)) | (at_upper & (alpha > PIVOT_TOL))
            ok &= ~is_basic & ~fixed
            cand = np.flatnonzero(ok)
            if cand.size == 0:
                return self._done("infeasible", z, basic, at_upper, binv, it)
            ratio = np.abs(d[cand]) / np.abs(alpha[cand])
            rmin = ratio.min()
            tie = cand[ratio <= rmin + 1e-12]
            q = int(tie.min()) if bland else int(tie[np.argmax(np.abs(alpha[tie]))])

            leaving = basic[r]
            bound = hi[leaving] if to_upper else lo[leaving]
            delta = (z[leaving] - bound) / alpha[q]
            col = binv @ self.column(q)
            z[basic] -= col * delta
            z[q] += delta
            z[leaving] = bound
            theta = d[q] / alpha[q]
            d -= theta * alpha
            d[basic] = 0.0
            d[q] = 0.0
            d[leaving] = -theta

            row = binv[r] / col[r]
            binv -= np.outer(col, row)
            binv[r] = row
            basic[r] = q
            is_basic[q], is_basic[leaving] = True, False
            at_upper[leaving] = to_upper

            obj = float(self.cost @ z)
            if obj > best_obj + 1e-12 * max(1.0, abs(obj)):
                best_obj, stall = obj, 0
            else:
                stall += 1
                if stall > STALL_LIMIT:
                    bland = True
        return self._done("iteration_limit", z, basic, at_upper, binv, max_iter)

    def _done(self, status, z, basic, at_upper, binv, it):
        obj = float(self.cost @ z) if status == "optimal" else np.inf
        return LPResult(status, z[:self.n].copy(), obj, basic, at_upper, binv, it)
