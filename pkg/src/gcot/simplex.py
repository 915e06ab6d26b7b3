"""Revised simplex for ``min c.x  s.t.  A x = b, x >= 0``.

Designed for few rows and many columns. The basis inverse is kept
explicitly and updated by elementary row operations, which lets the same
loop run on float64 arrays or on exact ``Fraction`` object arrays.

Pricing uses the most negative reduced cost (lowest index on ties) and drops
to Bland's smallest-index rule while pivots are degenerate, so the method
cannot cycle: every return to Dantzig pricing follows a strict decrease of
the objective.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

PIVOT_TOL = 1e-10


class LPError(RuntimeError):
    pass


class InfeasibleLP(LPError):
    """No ``x >= 0`` satisfies the equality constraints."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class UnboundedLP(LPError):
    pass


class IterationLimit(LPError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    value: float
    y: np.ndarray
    basis: list[int]
    iterations: int
    exact_value: Fraction | None = None


class _Backend:
    def __init__(self, exact: bool, tol: float):
        self.exact = exact
        self.tol = 0 if exact else tol

    def asarray(self, a):
        if self.exact:
            arr = np.asarray(a, dtype=object)
            return np.vectorize(_to_fraction, otypes=[object])(arr) if arr.size else arr
        return np.asarray(a, dtype=float)

    def eye(self, n):
        if self.exact:
            out = np.empty((n, n), dtype=object)
            out[...] = Fraction(0)
            for i in range(n):
                out[i, i] = Fraction(1)
            return out
        return np.eye(n)

    def zeros(self, n):
        if self.exact:
            out = np.empty(n, dtype=object)
            out[...] = Fraction(0)
            return out
        return np.zeros(n)


def _to_fraction(v):
    return v if isinstance(v, Fraction) else Fraction(v)


def _invert_exact(B):
    n = B.shape[0]
    M = np.concatenate([B.copy(), _Backend(True, 0).eye(n)], axis=1)
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r, col] != 0), None)
        if piv is None:
            raise LPError("singular basis")
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
        M[col] = M[col] / M[col, col]
        for r in range(n):
            if r != col and M[r, col] != 0:
                M[r] = M[r] - M[r, col] * M[col]
    return M[:, n:]


class _Tableau:
    """Basis bookkeeping for one phase of the method."""

    def __init__(self, A, b, basis, be: _Backend):
        self.A, self.b, self.be = A, b, be
        self.basis = list(basis)
        self.refactor()
        self.since_refactor = 0

    def refactor(self):
        B = self.A[:, self.basis]
        if self.be.exact:
            self.Binv = _invert_exact(B)
        else:
            self.Binv = np.linalg.inv(B)
        self.since_refactor = 0

    def xB(self):
        x = self.Binv @ self.b
        if not self.be.exact:
            x = np.where(np.abs(x) < 1e-13, 0.0, x)
        return x

    def pivot(self, p: int, enter: int, u):
        piv = u[p]
        row = self.Binv[p] / piv
        self.Binv = self.Binv - np.outer(u, row)
        self.Binv[p] = row
        self.basis[p] = enter
        self.since_refactor += 1
        if not self.be.exact and self.since_refactor >= 40:
            self.refactor()


def _run_phase(tab: _Tableau, c, allowed: np.ndarray, max_iter: int, start_iter: int):
    be = tab.be
    tol = be.tol
    A = tab.A
    degenerate_run = 0
    it = start_iter
    cscale = 1.0 if be.exact else max(1.0, float(np.max(np.abs(c)))) if c.size else 1.0
    opt_tol = tol * cscale
    while True:
        if it >= max_iter:
            raise IterationLimit(f"simplex did not converge within {max_iter} iterations")
        y = c[tab.basis] @ tab.Binv
        d = c - y @ A
        d = np.where(allowed, d, 0)
        if not be.exact:
            d = np.asarray(d, dtype=float)
        neg = np.nonzero(d < -opt_tol)[0]
        if neg.size == 0:
            return y, it
        if degenerate_run > 0:
            enter = int(neg[0])
        else:
            dn = d[neg]
            enter = int(neg[int(np.argmin(dn))]) if not be.exact else int(neg[min(range(len(neg)), key=lambda k: (dn[k], k))])
        u = tab.Binv @ A[:, enter]
        x = tab.xB()
        cand = np.nonzero(u > (tol if not be.exact else 0))[0]
        if cand.size == 0:
            raise UnboundedLP("objective is unbounded below")
        if be.exact:
            ratios = [(x[i] / u[i], tab.basis[i], i) for i in cand]
        else:
            ratios = [(max(float(x[i]), 0.0) / float(u[i]), tab.basis[i], i) for i in cand]
        best = min(r[0] for r in ratios)
        if be.exact:
            ties = [r for r in ratios if r[0] == best]
        else:
            ties = [r for r in ratios if r[0] <= best + 1e-12 * max(1.0, best)]
        _, _, p = min(ties, key=lambda r: r[1])
        degenerate_run = degenerate_run + 1 if best == 0 or (not be.exact and best < 1e-14) else 0
        tab.pivot(p, enter, u)
        it += 1


def solve_standard_form(A, b, c, exact: bool = False, tol: float = PIVOT_TOL,
                        max_iter: int = 200_000) -> SimplexResult:
    """Minimize ``c.x`` subject to ``A x = b`` and ``x >= 0``.

    Parameters
    ----------
    A : array_like, shape (r, n)
    b : array_like, shape (r,)
    c : array_like, shape (n,)
    exact : bool
        Run in rational arithmetic. Inputs are converted to ``Fraction``
        exactly (floats keep their binary value).

    Returns
    -------
    SimplexResult
        Optimal basic solution, optimal value and simplex multipliers ``y``
        with ``A^T y <= c`` (dual feasibility) and ``b.y = c.x``.

    Raises
    ------
    InfeasibleLP, UnboundedLP, IterationLimit
    """
    be = _Backend(exact, tol)
    A = be.asarray(A)
    b = be.asarray(b)
    c = be.asarray(c)
    r, n = A.shape
    sign = np.where(np.asarray([bi < 0 for bi in b]), -1, 1)
    A = A * sign[:, None]
    b = b * sign

    # Phase I on [A | I].
    A1 = np.concatenate([A, be.eye(r)], axis=1)
    c1 = np.concatenate([be.zeros(n), be.asarray(np.ones(r))])
    tab = _Tableau(A1, b, list(range(n, n + r)), be)
    allowed = np.ones(n + r, dtype=bool)
    _, it = _run_phase(tab, c1, allowed, max_iter, 0)
    xB = tab.xB()
    infeas = sum((xB[i] for i, j in enumerate(tab.basis) if j >= n), be.zeros(1)[0])
    bscale = 1.0 if exact else max(1.0, float(np.max(np.abs(b)))) if r else 1.0
    if (infeas > 0) if exact else (infeas > 1e-9 * bscale):
        worst = max((i for i, j in enumerate(tab.basis) if j >= n), key=lambda i: xB[i])
        raise InfeasibleLP("equality constraints cannot be met", row=tab.basis[worst] - n)

    # Drive remaining artificials out of the basis. When an artificial for
    # row i cannot leave, row i is a combination of the others and is dropped.
    rows = list(range(r))
    thr = 0 if exact else 1e-9
    p = 0
    while p < len(tab.basis):
        j = tab.basis[p]
        if j < n:
            p += 1
            continue
        rowvec = tab.Binv[p] @ tab.A[:, :n]
        basic = set(tab.basis)
        k = next((k for k in range(n) if k not in basic and abs(rowvec[k]) > thr), None)
        if k is not None:
            tab.pivot(p, k, tab.Binv @ tab.A[:, k])
            p += 1
            continue
        drop = rows.index(j - n)
        keep = [q for q in range(len(rows)) if q != drop]
        basis = [tab.basis[q] for q in range(len(tab.basis)) if q != p]
        rows = [rows[q] for q in keep]
        tab = _Tableau(tab.A[keep], tab.b[keep], basis, be)
        p = 0

    # Phase II on the original columns.
    A2 = tab.A[:, :n]
    tab2 = _Tableau(A2, tab.b, tab.basis, be)
    allowed2 = np.ones(n, dtype=bool)
    y, it = _run_phase(tab2, c, allowed2, max_iter, it)
    if not exact:
        tab2.refactor()
        y = c[tab2.basis] @ tab2.Binv
    xB = tab2.xB()
    x = be.zeros(n)
    for i, j in enumerate(tab2.basis):
        x[j] = xB[i]
    yfull = be.zeros(r)
    for k, orig in enumerate(rows):
        yfull[orig] = y[k] * int(sign[orig])
    value = sum((c[j] * x[j] for j in tab2.basis), be.zeros(1)[0])
    if exact:
        return SimplexResult(np.array([float(v) for v in x]), float(value),
                             np.array([float(v) for v in yfull]), list(tab2.basis), it,
                             exact_value=value)
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return SimplexResult(x, float(np.dot(c, x)), np.asarray(yfull, dtype=float), list(tab2.basis), it)
