from fractions import Fraction

import pytest

from ctfscm.simplex import (
    LinearProgram,
    LpStatus,
    SimplexError,
    enumerate_vertices,
    feasible_point,
    gaussian_solve,
    simplex_solve,
    solve_lp,
)

F = Fraction


def test_simple_box():
    # max x s.t. x <= 1 (as x + s = 1), x >= 0
    lp = LinearProgram(1, [], [([F(1)], F(1))], [F(1)], "max")
    res = simplex_solve(lp)
    assert res.status == LpStatus.OPTIMAL
    assert res.value == 1
    assert res.x == [F(1)]


def test_transportation_frechet():
    # joint of two Bernoulli(1/2) marginals; maximize the (1,1) cell
    # variables q00 q01 q10 q11
    eqs = [
        ([F(1)] * 4, F(1)),
        ([F(0), F(0), F(1), F(1)], F(1, 2)),  # first margin = 1/2
        ([F(0), F(1), F(0), F(1)], F(1, 2)),  # second margin = 1/2
    ]
    res = solve_lp([r for r, _ in eqs], [b for _, b in eqs],
                   [F(0), F(0), F(0), F(1)], "max")
    assert res.value == F(1, 2)
    res = solve_lp([r for r, _ in eqs], [b for _, b in eqs],
                   [F(0), F(0), F(0), F(1)], "min")
    assert res.value == F(0)


def test_infeasible_and_unbounded_distinct():
    res = solve_lp([[F(1)]], [F(-1)], [F(1)], "min")
    assert res.status == LpStatus.INFEASIBLE
    # min -x with only x >= 0: unbounded
    res = solve_lp([], [], [F(-1)], "min")
    assert res.status == LpStatus.UNBOUNDED


def test_degenerate_equalities():
    # duplicated constraint rows are tolerated
    A = [[F(1), F(1)], [F(2), F(2)]]
    b = [F(1), F(2)]
    res = solve_lp(A, b, [F(1), F(0)], "min")
    assert res.status == LpStatus.OPTIMAL
    assert res.value == 0


def test_solution_is_exact_rational():
    A = [[F(3), F(1), F(0)], [F(1), F(2), F(1)]]
    b = [F(1), F(1)]
    res = solve_lp(A, b, [F(1), F(1), F(1)], "min")
    assert res.status == LpStatus.OPTIMAL
    total1 = sum(a * x for a, x in zip(A[0], res.x))
    total2 = sum(a * x for a, x in zip(A[1], res.x))
    assert (total1, total2) == (F(1), F(1))
    assert all(x >= 0 for x in res.x)


def test_feasible_point_matches_constraints():
    A = [[F(1), F(1), F(0)], [F(0), F(1), F(1)]]
    b = [F(1), F(1)]
    x = feasible_point(A, b, 3)
    assert x is not None
    assert sum(a * v for a, v in zip(A[0], x)) == 1
    assert sum(a * v for a, v in zip(A[1], x)) == 1
    assert feasible_point([[F(1)]], [F(-2)], 1) is None


def test_vertex_enumeration_square():
    # {x + s1 = 1, y + s2 = 1} over (x, y, s1, s2): the unit square
    A = [
        [F(1), F(0), F(1), F(0)],
        [F(0), F(1), F(0), F(1)],
    ]
    b = [F(1), F(1)]
    vertices = enumerate_vertices(A, b, 4)
    corners = {(v[0], v[1]) for v in vertices}
    assert corners == {
        (F(0), F(0)),
        (F(0), F(1)),
        (F(1), F(0)),
        (F(1), F(1)),
    }


def test_vertex_enumeration_simplex():
    A = [[F(1), F(1), F(1)]]
    b = [F(1)]
    vertices = enumerate_vertices(A, b, 3)
    assert sorted(vertices) == [
        (F(0), F(0), F(1)),
        (F(0), F(1), F(0)),
        (F(1), F(0), F(0)),
    ]


def test_vertex_enumeration_frechet_segment():
    # coupling polytope of two Bernoulli(1/2) margins is a segment
    A = [
        [F(1)] * 4,
        [F(0), F(0), F(1), F(1)],
        [F(0), F(1), F(0), F(1)],
    ]
    b = [F(1), F(1, 2), F(1, 2)]
    vertices = enumerate_vertices(A, b, 4)
    assert len(vertices) == 2
    cell11 = sorted(v[3] for v in vertices)
    assert cell11 == [F(0), F(1, 2)]


def test_gaussian_solve_kinds():
    kind, x = gaussian_solve([[F(2), F(0)], [F(0), F(4)]], [F(1), F(2)], 2)
    assert kind == "unique" and x == [F(1, 2), F(1, 2)]
    kind, _ = gaussian_solve([[F(1), F(1)]], [F(1)], 2)
    assert kind == "underdetermined"
    kind, _ = gaussian_solve([[F(1), F(1)], [F(1), F(1)]], [F(1), F(2)], 2)
    assert kind == "inconsistent"


def test_linear_program_inequalities():
    # max x + y s.t. x + y <= 1, x <= 1/2
    lp = LinearProgram(
        2,
        [],
        [([F(1), F(1)], F(1)), ([F(1), F(0)], F(1, 2))],
        [F(1), F(1)],
        "max",
    )
    res = simplex_solve(lp)
    assert res.value == 1
    assert all(v >= 0 for v in res.x)


def test_bland_terminates_on_degenerate_cycle_risk():
    # classic degenerate instance; Bland's rule must terminate
    A = [
        [F(1, 4), F(-8), F(-1), F(9), F(1), F(0), F(0)],
        [F(1, 2), F(-12), F(-1, 2), F(3), F(0), F(1), F(0)],
        [F(0), F(0), F(1), F(0), F(0), F(0), F(1)],
    ]
    b = [F(0), F(0), F(1)]
    c = [F(-3, 4), F(20), F(-1, 2), F(6), F(0), F(0), F(0)]
    res = solve_lp(A, b, c, "min")
    assert res.status == LpStatus.OPTIMAL
    assert res.value == F(-5, 4)
