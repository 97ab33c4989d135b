"""Exact rational linear programming.

Two-phase primal simplex over ``fractions.Fraction`` with Bland's
anti-cycling rule.  Problems arrive in standard form (equality constraints
over nonnegative variables); inequalities are lowered with slacks by
:class:`LinearProgram`.  The module also enumerates vertices of small
polytopes by breadth-first search over feasible bases, which the bilinear
bound path relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Sequence


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpResult:
    status: LpStatus
    value: Fraction | None
    x: list[Fraction] | None


class SimplexError(Exception):
    pass


Matrix = list[list[Fraction]]


def _pivot(tableau: Matrix, basis: list[int], row: int, col: int) -> None:
    piv = tableau[row][col]
    inv = Fraction(1) / piv
    tableau[row] = [v * inv for v in tableau[row]]
    for r, line in enumerate(tableau):
        if r != row and line[col] != 0:
            factor = line[col]
            tableau[r] = [a - factor * b for a, b in zip(line, tableau[row])]
    basis[row] = col


def _run_simplex(
    tableau: Matrix, basis: list[int], price_cols: int, rhs_col: int
) -> LpStatus:
    """Minimize the objective in the last row; Bland's rule throughout.

    Only the first ``price_cols`` columns may enter the basis; the right
    hand side lives in column ``rhs_col``.
    """
    m = len(tableau) - 1
    while True:
        obj = tableau[m]
        col = next((j for j in range(price_cols) if obj[j] < 0), None)
        if col is None:
            return LpStatus.OPTIMAL
        best_row, best_ratio = None, None
        for r in range(m):
            a = tableau[r][col]
            if a > 0:
                ratio = tableau[r][rhs_col] / a
                if (
                    best_ratio is None
                    or ratio < best_ratio
                    or (ratio == best_ratio and basis[r] < basis[best_row])
                ):
                    best_row, best_ratio = r, ratio
        if best_row is None:
            return LpStatus.UNBOUNDED
        _pivot(tableau, basis, best_row, col)


def _phase_one(A: Matrix, b: list[Fraction]):
    """Feasible tableau for {Ax=b, x>=0}; returns None when infeasible.

    Output rows are fully reduced with artificials driven out and redundant
    rows dropped, so the returned system describes the same polytope.
    """
    m = len(A)
    n = len(A[0]) if m else 0
    rows: Matrix = []
    rhs: list[Fraction] = []
    for i in range(m):
        if b[i] < 0:
            rows.append([-v for v in A[i]])
            rhs.append(-b[i])
        else:
            rows.append(list(A[i]))
            rhs.append(b[i])
    width = n + m  # artificials occupy columns n .. n+m-1
    tableau: Matrix = []
    basis: list[int] = []
    for i in range(m):
        line = rows[i] + [Fraction(0)] * m + [rhs[i]]
        line[n + i] = Fraction(1)
        tableau.append(line)
        basis.append(n + i)
    obj = [Fraction(0)] * (width + 1)
    for i in range(m):
        for j in range(width + 1):
            obj[j] -= tableau[i][j]
    for i in range(m):
        obj[n + i] = Fraction(0)
    tableau.append(obj)

    _run_simplex(tableau, basis, n, width)  # price only original columns
    if -tableau[m][width] != 0:
        return None  # artificial mass remains: the system is infeasible

    # Drive remaining artificials out of the basis.
    drop_rows = []
    for r in range(m):
        if basis[r] >= n:
            col = next((j for j in range(n) if tableau[r][j] != 0), None)
            if col is None:
                drop_rows.append(r)
            else:
                _pivot(tableau, basis, r, col)
    reduced_A: Matrix = []
    reduced_b: list[Fraction] = []
    reduced_basis: list[int] = []
    for r in range(m):
        if r in drop_rows:
            continue
        reduced_A.append(tableau[r][:n])
        reduced_b.append(tableau[r][n + m])
        reduced_basis.append(basis[r])
    return reduced_A, reduced_b, reduced_basis


def _basic_point(A: Matrix, b: list[Fraction], basis: Sequence[int], n: int):
    x = [Fraction(0)] * n
    for r, col in enumerate(basis):
        x[col] = b[r]
    return x


def solve_lp(
    A: Sequence[Sequence[Fraction]],
    b: Sequence[Fraction],
    c: Sequence[Fraction],
    sense: str = "min",
) -> LpResult:
    """min/max of c.x over {Ax = b, x >= 0}; exact optimum and a vertex."""
    n = len(c)
    A = [list(map(Fraction, row)) for row in A]
    b = list(map(Fraction, b))
    c = list(map(Fraction, c))
    if sense == "max":
        inner = solve_lp(A, b, [-v for v in c], "min")
        if inner.status == LpStatus.OPTIMAL:
            inner.value = -inner.value
        return inner
    if sense != "min":
        raise SimplexError(f"unknown sense {sense!r}")

    phase = _phase_one(A, b)
    if phase is None:
        return LpResult(LpStatus.INFEASIBLE, None, None)
    rA, rb, basis = phase
    m = len(rA)
    tableau = [rA[r] + [rb[r]] for r in range(m)]
    obj = list(c) + [Fraction(0)]
    for r in range(m):
        coef = obj[basis[r]]
        if coef != 0:
            obj = [a - coef * biv for a, biv in zip(obj, tableau[r])]
    tableau.append(obj)
    status = _run_simplex(tableau, basis, n, n)
    if status == LpStatus.UNBOUNDED:
        return LpResult(LpStatus.UNBOUNDED, None, None)
    x = _basic_point([row[:n] for row in tableau[:m]],
                     [row[n] for row in tableau[:m]], basis, n)
    value = sum(ci * xi for ci, xi in zip(c, x))
    return LpResult(LpStatus.OPTIMAL, value, x)


def feasible_point(
    A: Sequence[Sequence[Fraction]], b: Sequence[Fraction], n: int
) -> list[Fraction] | None:
    phase = _phase_one([list(row) for row in A], list(b))
    if phase is None:
        return None
    rA, rb, basis = phase
    return _basic_point(rA, rb, basis, n)


class WarmLp:
    """Reusable solver for many objectives over one feasible region.

    Phase one runs once at construction; each ``minimize``/``maximize``
    restarts phase two from the stored feasible basis, which is much
    cheaper than re-deriving feasibility per objective.
    """

    def __init__(self, A: Sequence[Sequence[Fraction]], b: Sequence[Fraction],
                 n: int):
        self.n = n
        phase = _phase_one([list(map(Fraction, row)) for row in A],
                           list(map(Fraction, b)))
        self.feasible = phase is not None
        if phase is not None:
            self.rA, self.rb, self.basis = phase

    def minimize(self, c: Sequence[Fraction]) -> LpResult:
        if not self.feasible:
            return LpResult(LpStatus.INFEASIBLE, None, None)
        n = self.n
        m = len(self.rA)
        basis = list(self.basis)
        tableau = [list(self.rA[r]) + [self.rb[r]] for r in range(m)]
        obj = list(map(Fraction, c)) + [Fraction(0)]
        for r in range(m):
            coef = obj[basis[r]]
            if coef != 0:
                obj = [a - coef * biv for a, biv in zip(obj, tableau[r])]
        tableau.append(obj)
        status = _run_simplex(tableau, basis, n, n)
        if status == LpStatus.UNBOUNDED:
            return LpResult(LpStatus.UNBOUNDED, None, None)
        x = _basic_point([row[:n] for row in tableau[:m]],
                         [row[n] for row in tableau[:m]], basis, n)
        value = sum(ci * xi for ci, xi in zip(c, x))
        return LpResult(LpStatus.OPTIMAL, value, x)

    def maximize(self, c: Sequence[Fraction]) -> LpResult:
        res = self.minimize([-v for v in c])
        if res.status == LpStatus.OPTIMAL:
            res.value = -res.value
        return res

    def solve(self, c: Sequence[Fraction], sense: str) -> LpResult:
        return self.minimize(c) if sense == "min" else self.maximize(c)


def enumerate_vertices(
    A: Sequence[Sequence[Fraction]],
    b: Sequence[Fraction],
    n: int,
    max_bases: int = 50_000,
) -> list[tuple[Fraction, ...]]:
    """All vertices of {Ax = b, x >= 0} by BFS over feasible bases.

    Degenerate pivots are followed so every basis of every vertex is
    reachable; points are deduplicated.  Intended for small polytopes.
    """
    phase = _phase_one([list(row) for row in A], list(b))
    if phase is None:
        return []
    rA, rb, basis0 = phase
    m = len(rA)
    if m == 0:
        return [tuple(Fraction(0) for _ in range(n))]

    start = frozenset(basis0)
    seen_bases = {start}
    queue = [(rA, rb, list(basis0))]
    points: set[tuple[Fraction, ...]] = set()
    points.add(tuple(_basic_point(rA, rb, basis0, n)))
    count = 0
    while queue:
        curA, curb, basis = queue.pop(0)
        count += 1
        if count > max_bases:
            raise SimplexError(f"vertex enumeration exceeded {max_bases} bases")
        in_basis = set(basis)
        for col in range(n):
            if col in in_basis:
                continue
            best_ratio = None
            for r in range(m):
                a = curA[r][col]
                if a > 0:
                    ratio = curb[r] / a
                    if best_ratio is None or ratio < best_ratio:
                        best_ratio = ratio
            if best_ratio is None:
                continue  # unbounded edge
            for r in range(m):
                a = curA[r][col]
                if a > 0 and curb[r] / a == best_ratio:
                    new_basis = list(basis)
                    key = frozenset(new_basis[:r] + [col] + new_basis[r + 1:])
                    if key in seen_bases:
                        continue
                    seen_bases.add(key)
                    newA = [list(row) for row in curA]
                    newb = list(curb)
                    tmp = [newA[i] + [newb[i]] for i in range(m)]
                    nb = list(basis)
                    _pivot(tmp, nb, r, col)
                    newA = [row[:n] for row in tmp]
                    newb = [row[n] for row in tmp]
                    points.add(tuple(_basic_point(newA, newb, nb, n)))
                    queue.append((newA, newb, nb))
    return sorted(points)


def gaussian_solve(
    A: Sequence[Sequence[Fraction]], b: Sequence[Fraction], n: int
) -> tuple[str, list[Fraction] | None]:
    """Exact Gaussian elimination on Ax = b.

    Returns ("unique", x), ("underdetermined", None), or
    ("inconsistent", None).
    """
    rows = [list(map(Fraction, row)) + [Fraction(v)] for row, v in zip(A, b)]
    m = len(rows)
    pivots: list[tuple[int, int]] = []
    r = 0
    for col in range(n):
        sel = next((i for i in range(r, m) if rows[i][col] != 0), None)
        if sel is None:
            continue
        rows[r], rows[sel] = rows[sel], rows[r]
        inv = Fraction(1) / rows[r][col]
        rows[r] = [v * inv for v in rows[r]]
        for i in range(m):
            if i != r and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [a - f * c for a, c in zip(rows[i], rows[r])]
        pivots.append((r, col))
        r += 1
        if r == m:
            break
    for i in range(r, m):
        if rows[i][n] != 0:
            return "inconsistent", None
    if len(pivots) < n:
        return "underdetermined", None
    x = [Fraction(0)] * n
    for row_i, col in pivots:
        x[col] = rows[row_i][n]
    return "unique", x


@dataclass
class LinearProgram:
    """General-form LP lowered to standard form on demand.

    ``equalities`` and ``inequalities`` are (coefficients, rhs) pairs over
    nonnegative variables; inequalities are of the form coeffs . x <= rhs.
    """

    num_vars: int
    equalities: list[tuple[list[Fraction], Fraction]]
    inequalities: list[tuple[list[Fraction], Fraction]]
    objective: list[Fraction]
    sense: str = "min"

    def solve(self) -> LpResult:
        n = self.num_vars
        k = len(self.inequalities)
        A: Matrix = []
        b: list[Fraction] = []
        for coeffs, rhs in self.equalities:
            A.append(list(coeffs) + [Fraction(0)] * k)
            b.append(Fraction(rhs))
        for i, (coeffs, rhs) in enumerate(self.inequalities):
            row = list(coeffs) + [Fraction(0)] * k
            row[n + i] = Fraction(1)
            A.append(row)
            b.append(Fraction(rhs))
        c = list(self.objective) + [Fraction(0)] * k
        result = solve_lp(A, b, c, self.sense)
        if result.x is not None:
            result.x = result.x[:n]
        return result


def simplex_solve(lp: LinearProgram) -> LpResult:
    """Exact optimum of a :class:`LinearProgram`; distinct statuses for
    infeasible and unbounded problems."""
    return simplex_solve_checked(lp)


def simplex_solve_checked(lp: LinearProgram) -> LpResult:
    result = lp.solve()
    if result.status == LpStatus.OPTIMAL:
        x = result.x
        for coeffs, rhs in lp.equalities:
            total = sum(c * v for c, v in zip(coeffs, x))
            if total != rhs:
                raise SimplexError("optimal point violates an equality")
        for coeffs, rhs in lp.inequalities:
            total = sum(c * v for c, v in zip(coeffs, x))
            if total > rhs:
                raise SimplexError("optimal point violates an inequality")
        if any(v < 0 for v in x):
            raise SimplexError("optimal point violates nonnegativity")
    return result
