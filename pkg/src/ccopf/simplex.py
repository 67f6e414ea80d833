"""Dense two-phase primal simplex for small LPs.

Problems are stated as ``min c.x + c0  s.t.  A x <= b,  lb <= x <= ub``.
Bounds are folded into non-negative variables, rows with a negative
right-hand side get an artificial variable, and Bland's rule picks both the
entering and the leaving variable, so the method cannot cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
DEFAULT_MAX_ITER = 10 ** 6


class IterationLimitError(RuntimeError):
    pass


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    c0: float = 0.0
    var_labels: list[str] | None = None
    row_labels: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.A.shape[0] != self.b.size:
            raise ValueError("row count of A does not match b")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bounds must have one entry per variable")
        for name, arr in (("c", self.c), ("A", self.A), ("b", self.b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ValueError("NaN bound")
        if self.var_labels is None:
            self.var_labels = [f"x{j}" for j in range(n)]

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def to_text(self) -> str:
        """Plain-text dump: objective, one line per row, then bounds."""
        fmt = "{:.17g}".format
        out = [f"vars {self.n_vars} rows {self.n_rows}",
               "min " + " ".join(fmt(x) for x in self.c) + f" + {fmt(self.c0)}"]
        for i in range(self.n_rows):
            label = self.row_labels[i] if self.row_labels else f"r{i}"
            out.append(f"{label}: " + " ".join(fmt(x) for x in self.A[i]) + f" <= {fmt(self.b[i])}")
        for j in range(self.n_vars):
            out.append(f"bound {self.var_labels[j]} {fmt(self.lb[j])} {fmt(self.ub[j])}")
        return "\n".join(out) + "\n"


@dataclass
class LpSolution:
    status: str                     # optimal | infeasible | unbounded
    x: np.ndarray | None
    objective: float
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def presolve_rows(A: np.ndarray, b: np.ndarray, decimals: int = 12):
    """Drop empty rows and keep only the tightest of positively parallel rows.

    Returns ``(A', b', keep)`` or ``None`` when an empty row is violated.
    ``keep`` indexes the surviving original rows.
    """
    if A.shape[0] == 0:
        return A, b, np.arange(0)
    scale = np.max(np.abs(A), axis=1)
    empty = scale == 0
    if np.any(b[empty] < -FEAS_TOL):
        return None
    idx = np.flatnonzero(~empty)
    if idx.size == 0:
        return A[:0], b[:0], idx
    An = A[idx] / scale[idx, None]
    bn = b[idx] / scale[idx]
    key = np.round(An, decimals) + 0.0
    _, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    order = np.lexsort((bn, inverse))
    first = np.ones(order.size, dtype=bool)
    first[1:] = inverse[order][1:] != inverse[order][:-1]
    chosen = np.sort(idx[order[first]])
    return A[chosen], b[chosen], chosen


class _Tableau:
    def __init__(self, T: np.ndarray, basis: np.ndarray, m: int, max_iter: int):
        self.T = T
        self.m = m
        self.basis = basis
        self.iterations = 0
        self.max_iter = max_iter

    def pivot(self, r: int, col: int):
        T = self.T
        T[r] /= T[r, col]
        colv = T[:, col].copy()
        colv[r] = 0.0
        nz = np.flatnonzero(np.abs(colv) > 0)
        if nz.size:
            T[nz] -= np.outer(colv[nz], T[r])
        self.basis[r] = col
        self.iterations += 1
        if self.iterations > self.max_iter:
            raise IterationLimitError(f"simplex exceeded {self.max_iter} iterations")

    def run(self, cost_row: int, allowed: np.ndarray) -> str:
        """Minimize the objective in row ``cost_row`` (reduced costs, rhs last)."""
        T = self.T
        m = self.m
        while True:
            red = T[cost_row, :-1]
            cand = np.flatnonzero((red < -PIVOT_TOL) & allowed)
            if cand.size == 0:
                return "optimal"
            col = cand[0]
            colv = T[:m, col]
            pos = colv > PIVOT_TOL
            if not np.any(pos):
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = T[:m, -1][pos] / colv[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + PIVOT_TOL * max(1.0, abs(best)))
            r = ties[np.argmin(self.basis[ties])]
            self.pivot(r, col)


def _fold_bounds(lp: LpProblem):
    """Express x = d + Q y with y >= 0; returns (d, Q, extra_rows, extra_rhs)."""
    n = lp.n_vars
    cols, d = [], np.zeros(n)
    extra_A, extra_b = [], []
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(lo):
            d[j] = lo
            cols.append(e)
            if np.isfinite(hi):
                extra_A.append(len(cols) - 1)
                extra_b.append(hi - lo)
        elif np.isfinite(hi):
            d[j] = hi
            cols.append(-e)
        else:
            cols.append(e)
            cols.append(-e)
    Q = np.array(cols).T.reshape(n, len(cols))
    return d, Q, extra_A, extra_b


def solve_lp(lp: LpProblem, max_iter: int = DEFAULT_MAX_ITER, presolve: bool = True) -> LpSolution:
    n = lp.n_vars
    if np.any(lp.lb > lp.ub):
        return LpSolution("infeasible", None, np.nan, 0, {"reason": "crossed bounds"})
    A, b = lp.A, lp.b
    kept = np.arange(A.shape[0])
    if presolve:
        res = presolve_rows(A, b)
        if res is None:
            return LpSolution("infeasible", None, np.nan, 0, {"reason": "violated empty row"})
        A, b, kept = res

    d, Q, ub_cols, ub_vals = _fold_bounds(lp)
    ny = Q.shape[1]
    A_y = A @ Q
    b_y = b - A @ d
    if ub_cols:
        U = np.zeros((len(ub_cols), ny))
        U[np.arange(len(ub_cols)), ub_cols] = 1.0
        A_y = np.vstack([A_y, U])
        b_y = np.concatenate([b_y, ub_vals])
    c_y = lp.c @ Q
    c0 = float(lp.c @ d + lp.c0)

    m = A_y.shape[0]
    neg = b_y < 0
    n_art = int(neg.sum())
    # columns: y (ny) | slacks (m) | artificials (n_art) | rhs
    width = ny + m + n_art + 1
    T = np.zeros((m + 2, width))
    sign = np.where(neg, -1.0, 1.0)
    T[:m, :ny] = A_y * sign[:, None]
    T[:m, ny:ny + m] = np.diag(sign)
    T[:m, -1] = b_y * sign
    basis = np.arange(ny, ny + m)
    art_rows = np.flatnonzero(neg)
    for k, r in enumerate(art_rows):
        T[r, ny + m + k] = 1.0
        basis[r] = ny + m + k
    # row m: phase-2 objective, row m+1: phase-1 objective
    T[m, :ny] = c_y
    T[m + 1, ny + m:ny + m + n_art] = 1.0
    for r in art_rows:
        T[m + 1] -= T[r]
    for r in range(m):
        if T[m, basis[r]] != 0:
            T[m] -= T[m, basis[r]] * T[r]

    tab = _Tableau(T, basis, m, max_iter)
    allowed = np.ones(width - 1, dtype=bool)
    if n_art:
        tab.run(m + 1, allowed)
        infeas = -T[m + 1, -1]
        if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(b_y[neg])))):
            y = _extract(T, basis, ny, m)
            return LpSolution("infeasible", _unfold(d, Q, y), np.nan, tab.iterations,
                              {"phase1_infeasibility": float(infeas), "rows_kept": kept})
        # push artificials out of the basis where possible
        for r in range(m):
            if basis[r] >= ny + m:
                nz = np.flatnonzero(np.abs(T[r, :ny + m]) > PIVOT_TOL)
                if nz.size:
                    tab.pivot(r, nz[0])
        allowed[ny + m:] = False
        T[m + 1] = 0.0

    status = tab.run(m, allowed)
    y = _extract(T, basis, ny, m)
    x = _unfold(d, Q, y)
    if status == "unbounded":
        return LpSolution("unbounded", x, -np.inf, tab.iterations, {"rows_kept": kept})
    obj = float(lp.c @ x + lp.c0)
    return LpSolution("optimal", x, obj, tab.iterations, {"rows_kept": kept})


def _extract(T, basis, ny, m):
    y = np.zeros(ny)
    for r in range(m):
        if basis[r] < ny:
            y[basis[r]] = T[r, -1]
    return y


def _unfold(d, Q, y):
    return d + Q @ y
