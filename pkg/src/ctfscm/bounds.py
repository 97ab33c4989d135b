"""Optimal bounds on counterfactual probabilities given a diagram and an
observational distribution.

The feasible set (all models inducing the diagram and matching the
distribution) is parameterized per c-component by response distributions
subject to the identified c-factor constraints.  The query's unnormalized
probability is multilinear in those parameters and the conditioning
probability is pinned by the constraints, so:

* no free component: the query is identified, the bound is a point;
* one free component: an exact LP, certified;
* two free components: vertex enumeration of the smaller polytope times
  an LP per vertex, certified (a bilinear optimum over a product of
  polytopes is attained at a vertex pair);
* three or more: alternating LPs from random feasible starts, flagged
  uncertified because only an inner approximation is guaranteed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .canonical import (
    BoundsInputError,
    ComponentConstraints,
    ComponentSpace,
    ProjectionPlan,
    SizeGuardError,
    build_constraints,
    build_space,
    c_components,
    project_relevant_cells,
    reconstruct_scm,
)
from .core import CausalDiagram, FiniteDomain, Scm
from .engine import CtfQuery, Distribution, ZeroConditioningError, conditional_ctf
from .rng import SeedStream
from .simplex import LpStatus, WarmLp, enumerate_vertices, feasible_point

COMBO_LIMIT = 250_000


class AnalyticPatternError(Exception):
    """Query does not match the closed-form pattern; use optimal_bounds."""


@dataclass
class Witness:
    """Per-component response weights attaining a bound endpoint."""

    assignments: dict[tuple[str, ...], tuple[ComponentSpace, list[Fraction]]]
    diagram: CausalDiagram
    domains: Mapping[str, FiniteDomain]
    constraints: Mapping[tuple[str, ...], ComponentConstraints]

    def to_scm(self, fill: str = "exact", name: str = "witness") -> Scm:
        return reconstruct_scm(
            self.diagram, self.domains, self.constraints, self.assignments,
            fill=fill, name=name,
        )


@dataclass
class BoundResult:
    query: CtfQuery
    lower: Fraction
    upper: Fraction
    certified: bool
    method: str  # analytic | lp | bilinear | heuristic
    witness_lower: Witness | None = None
    witness_upper: Witness | None = None

    def __post_init__(self):
        if not (0 <= self.lower <= self.upper <= 1):
            raise ValueError(
                f"bound [{self.lower}, {self.upper}] outside the unit interval"
            )
        if self.certified == (self.method == "heuristic"):
            raise ValueError("certified flag must mirror the method")

    def contains(self, value: Fraction) -> bool:
        return self.lower <= value <= self.upper

    def to_json_dict(self) -> dict:
        return {
            "query": self.query.pretty(),
            "method": self.method,
            "lower": f"{self.lower.numerator}/{self.lower.denominator}",
            "upper": f"{self.upper.numerator}/{self.upper.denominator}",
            "certified": self.certified,
            "witness_available": self.witness_lower is not None,
        }


def infer_domains(
    obs: Distribution, diagram: CausalDiagram, query: CtfQuery
) -> dict[str, FiniteDomain]:
    """Domains read off the observed support plus the query's values."""
    values: dict[str, set[int]] = {v: set() for v in diagram.nodes}
    for key in obs.table:
        for v, x in zip(obs.variables, key):
            if v in values:
                values[v].add(x)
    for e in query.events:
        values[e.variable].add(e.value)
        for k, x in e.context:
            values[k].add(x)
    for k, x in query.conditioning:
        values[k].add(x)
    empty = [v for v, vs in values.items() if not vs]
    if empty:
        raise BoundsInputError(
            f"no values known for {empty}; the distribution must cover "
            "every diagram node"
        )
    return {v: FiniteDomain(tuple(sorted(vs))) for v, vs in values.items()}


@dataclass
class _Problem:
    query: CtfQuery
    diagram: CausalDiagram
    domains: Mapping[str, FiniteDomain]
    constraints: Mapping[tuple[str, ...], ComponentConstraints]
    plan: ProjectionPlan
    spaces: list[ComponentSpace]
    free: list[int]
    coeff: dict[tuple[int, ...], Fraction]
    den: Fraction


def _assemble(
    obs: Distribution,
    diagram: CausalDiagram,
    query: CtfQuery,
    domains: Mapping[str, FiniteDomain] | None,
    project: bool,
    space_limit: int,
    combo_limit: int,
) -> _Problem:
    den = obs.prob(dict(query.conditioning))
    if den == 0:
        raise ZeroConditioningError(
            f"conditioning {dict(query.conditioning)} has probability 0"
        )
    if domains is None:
        domains = infer_domains(obs, diagram, query)
    plan = project_relevant_cells(query, diagram, domains)
    constraints = build_constraints(obs, diagram, domains)

    needed_union: set[str] = set()
    if not plan.impossible:
        for pss in plan.retention_passes:
            needed_union.update(pss.needed)
    spaces: list[ComponentSpace] = []
    for comp in c_components(diagram):
        if not needed_union & set(comp):
            continue
        spaces.append(
            build_space(
                comp,
                diagram,
                domains,
                constraints[comp],
                plan.retained if project else None,
                touched=True,
                limit=space_limit,
            )
        )

    coeff: dict[tuple[int, ...], Fraction] = {}
    free = [i for i, s in enumerate(spaces) if s.pinned is None]
    if not plan.impossible and spaces:
        total = 1
        for s in spaces:
            total *= s.size
        if total > combo_limit:
            raise SizeGuardError(
                f"{total} profile combinations exceed the limit {combo_limit}"
            )
        space_of: dict[str, int] = {}
        cell_idx: list[dict] = []
        for si, s in enumerate(spaces):
            cell_idx.append(s.cell_index())
            for v in s.component:
                space_of[v] = si
        passes = []
        for pss in plan.indicator_passes:
            checks = dict(pss.checks)
            steps = [
                (v, diagram.parents(v), space_of[v], checks.get(v))
                for v in pss.needed
            ]
            passes.append((dict(pss.interventions), steps))
        pinned = {i: s.pinned for i, s in enumerate(spaces) if s.pinned is not None}

        for combo in itertools.product(*(range(s.size) for s in spaces)):
            mass = Fraction(1)
            for i, qvec in pinned.items():
                mass *= qvec[combo[i]]
                if mass == 0:
                    break
            if mass == 0:
                continue
            profiles = [spaces[si].profiles[combo[si]] for si in range(len(spaces))]
            ok = True
            for interventions, steps in passes:
                vals = dict(interventions)
                for v, parents, si, chk in steps:
                    pa = tuple(vals[p] for p in parents)
                    val = profiles[si][cell_idx[si][(v, pa)]]
                    vals[v] = val
                    if chk is not None and val != chk:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                key = tuple(combo[i] for i in free)
                coeff[key] = coeff.get(key, Fraction(0)) + mass
    elif not plan.impossible:
        # Query touches nothing: the event set is empty, probability is den.
        coeff[()] = den

    return _Problem(query, diagram, domains, constraints, plan, spaces, free,
                    coeff, den)


def _space_system(space: ComponentSpace):
    A = [row for row, _ in space.rows]
    b = [rhs for _, rhs in space.rows]
    return A, b


def _warm(space: ComponentSpace) -> WarmLp:
    """Phase-one work is shared across the many objectives solved per
    space (endpoint LPs, vertex sampling, alternating ascent)."""
    if space.warm_lp is None:
        A, b = _space_system(space)
        warm = WarmLp(A, b, space.size)
        if not warm.feasible:
            raise SizeGuardError(
                f"no feasible parameterization for {space.component}"
            )
        space.warm_lp = warm
    return space.warm_lp


def _witness(problem: _Problem, qs: Mapping[int, Sequence[Fraction]]) -> Witness:
    assignments = {}
    for i, s in enumerate(problem.spaces):
        if s.pinned is not None:
            assignments[s.component] = (s, list(s.pinned))
        else:
            assignments[s.component] = (s, list(qs[i]))
    return Witness(assignments, problem.diagram, problem.domains,
                   problem.constraints)


def _feasible_or_raise(space: ComponentSpace) -> list[Fraction]:
    A, b = _space_system(space)
    point = feasible_point(A, b, space.size)
    if point is None:
        raise SizeGuardError(f"no feasible parameterization for {space.component}")
    return point


def _tensor_value(problem, qs: Mapping[int, Sequence[Fraction]]) -> Fraction:
    total = Fraction(0)
    for key, c in problem.coeff.items():
        m = c
        for pos, i in enumerate(problem.free):
            m *= qs[i][key[pos]]
            if m == 0:
                break
        total += m
    return total


def _contract(problem, qs, target_pos: int) -> list[Fraction]:
    """Objective over one free space with the others held fixed."""
    i_target = problem.free[target_pos]
    c = [Fraction(0)] * problem.spaces[i_target].size
    for key, coeff in problem.coeff.items():
        m = coeff
        for pos, i in enumerate(problem.free):
            if pos == target_pos:
                continue
            m *= qs[i][key[pos]]
            if m == 0:
                break
        if m != 0:
            c[key[target_pos]] += m
    return c


def _random_vertex(space: ComponentSpace, stream: SeedStream) -> list[Fraction]:
    c = [Fraction(stream.randrange(2001) - 1000) for _ in range(space.size)]
    res = _warm(space).minimize(c)
    if res.status != LpStatus.OPTIMAL:
        raise SizeGuardError(f"degenerate polytope for {space.component}")
    return res.x


def _random_feasible(space: ComponentSpace, stream: SeedStream) -> list[Fraction]:
    if stream.randrange(2) == 0:
        return _random_vertex(space, stream)
    v1 = _random_vertex(space, stream)
    v2 = _random_vertex(space, stream)
    lam = stream.fraction(997)
    return [lam * a + (1 - lam) * b for a, b in zip(v1, v2)]


def optimal_bounds(
    obs: Distribution,
    diagram: CausalDiagram,
    query: CtfQuery,
    *,
    domains: Mapping[str, FiniteDomain] | None = None,
    project: bool = True,
    starts: int = 32,
    seed: int = 0,
    space_limit: int = 4096,
    combo_limit: int = COMBO_LIMIT,
) -> BoundResult:
    """Sharp bounds on the conditional counterfactual query.

    Certified results carry witnesses: parameterizations that reproduce the
    observational distribution exactly and attain the endpoints.
    """
    problem = _assemble(obs, diagram, query, domains, project, space_limit,
                        combo_limit)
    den = problem.den
    free = problem.free

    if problem.plan.impossible or not problem.coeff:
        qs = {i: _feasible_or_raise(problem.spaces[i]) for i in free}
        w = _witness(problem, qs)
        return BoundResult(query, Fraction(0), Fraction(0), True, "lp", w, w)

    if not free:
        value = problem.coeff.get((), Fraction(0)) / den
        w = _witness(problem, {})
        return BoundResult(query, value, value, True, "lp", w, w)

    if len(free) == 1:
        i = free[0]
        space = problem.spaces[i]
        warm = _warm(space)
        c = [Fraction(0)] * space.size
        for key, val in problem.coeff.items():
            c[key[0]] += val
        lo = warm.minimize(c)
        hi = warm.maximize(c)
        if lo.status != LpStatus.OPTIMAL or hi.status != LpStatus.OPTIMAL:
            raise SizeGuardError("constraint polytope is empty or unbounded")
        return BoundResult(
            query,
            lo.value / den,
            hi.value / den,
            True,
            "lp",
            _witness(problem, {i: lo.x}),
            _witness(problem, {i: hi.x}),
        )

    if len(free) == 2:
        sizes = [problem.spaces[i].size for i in free]
        small_pos = 0 if sizes[0] <= sizes[1] else 1
        big_pos = 1 - small_pos
        i_small, i_big = free[small_pos], free[big_pos]
        A_s, b_s = _space_system(problem.spaces[i_small])
        warm_big = _warm(problem.spaces[i_big])
        best_lo = best_hi = None
        wit_lo = wit_hi = None
        for vertex in enumerate_vertices(A_s, b_s, problem.spaces[i_small].size):
            c = [Fraction(0)] * problem.spaces[i_big].size
            for key, val in problem.coeff.items():
                m = val * vertex[key[small_pos]]
                if m != 0:
                    c[key[big_pos]] += m
            lo = warm_big.minimize(c)
            hi = warm_big.maximize(c)
            if lo.status != LpStatus.OPTIMAL or hi.status != LpStatus.OPTIMAL:
                raise SizeGuardError("constraint polytope is empty or unbounded")
            if best_lo is None or lo.value < best_lo:
                best_lo = lo.value
                wit_lo = {i_small: list(vertex), i_big: lo.x}
            if best_hi is None or hi.value > best_hi:
                best_hi = hi.value
                wit_hi = {i_small: list(vertex), i_big: hi.x}
        return BoundResult(
            query,
            best_lo / den,
            best_hi / den,
            True,
            "bilinear",
            _witness(problem, wit_lo),
            _witness(problem, wit_hi),
        )

    # Three or more coupled components: alternating ascent, inner bound only.
    stream = SeedStream("bounds-heuristic", seed)
    results = {}
    for sense in ("min", "max"):
        best_val = None
        best_qs = None
        for _ in range(max(1, starts)):
            qs = {i: _random_feasible(problem.spaces[i], stream) for i in free}
            for _ in range(50):
                improved = False
                for pos, i in enumerate(free):
                    c = _contract(problem, qs, pos)
                    res = _warm(problem.spaces[i]).solve(c, sense)
                    if res.status != LpStatus.OPTIMAL:
                        raise SizeGuardError("alternating step failed")
                    cur = sum(
                        ci * qi for ci, qi in zip(c, qs[i])
                    )
                    if (sense == "min" and res.value < cur) or (
                        sense == "max" and res.value > cur
                    ):
                        qs[i] = res.x
                        improved = True
                if not improved:
                    break
            val = _tensor_value(problem, qs)
            if (
                best_val is None
                or (sense == "min" and val < best_val)
                or (sense == "max" and val > best_val)
            ):
                best_val, best_qs = val, qs
        results[sense] = (best_val, best_qs)
    lo_val, lo_qs = results["min"]
    hi_val, hi_qs = results["max"]
    return BoundResult(
        query,
        lo_val / den,
        hi_val / den,
        False,
        "heuristic",
        _witness(problem, lo_qs),
        _witness(problem, hi_qs),
    )


def analytic_bounds(
    obs: Distribution,
    diagram: CausalDiagram,
    query: CtfQuery,
    *,
    domains: Mapping[str, FiniteDomain] | None = None,
) -> BoundResult:
    """Closed-form coupling bounds for the single-free-variable pattern.

    Applies when exactly one variable is counterfactually free with two
    relevant cells (its factual one, pinned by conditioning, and one
    counterfactual one) and everything else is identified.  The interval
    is then the two-cell coupling range divided by the factual marginal;
    on every input where the pattern applies the result equals
    :func:`optimal_bounds`.
    """
    problem = _assemble(obs, diagram, query, domains, True, 4096, COMBO_LIMIT)
    if problem.plan.impossible:
        raise AnalyticPatternError(
            "query is identically zero; use optimal_bounds"
        )
    if len(problem.free) != 1:
        raise AnalyticPatternError(
            f"{len(problem.free)} free components; use optimal_bounds"
        )
    i = problem.free[0]
    space = problem.spaces[i]
    if len(space.component) != 1 or len(space.cells) != 2:
        raise AnalyticPatternError(
            "free component is not a single variable with two relevant "
            "cells; use optimal_bounds"
        )
    support = [(key[0], val) for key, val in problem.coeff.items() if val != 0]
    if len(support) != 1:
        raise AnalyticPatternError(
            "objective is not a single coupling cell; use optimal_bounds"
        )
    p_idx, alpha = support[0]
    profile = space.profiles[p_idx]
    var = space.component[0]
    cons = problem.constraints[space.component]
    m0 = cons.marginal(var, space.cells[0][1], profile[0])
    m1 = cons.marginal(var, space.cells[1][1], profile[1])
    if problem.den == alpha * m0:
        a, b = m0, m1
        factual_cell, ctf_cell = 0, 1
    elif problem.den == alpha * m1:
        a, b = m1, m0
        factual_cell, ctf_cell = 1, 0
    else:
        raise AnalyticPatternError(
            "conditioning does not pin the factual cell; use optimal_bounds"
        )
    lower = max(Fraction(0), a + b - 1) / a
    upper = min(a, b) / a

    dom = problem.domains[var].values
    row_m = {x: cons.marginal(var, space.cells[0][1], x) for x in dom}
    col_m = {y: cons.marginal(var, space.cells[1][1], y) for y in dom}
    corner = (profile[0], profile[1])

    def coupling(t: Fraction) -> dict[int, Fraction]:
        joint = _forced_corner_coupling(row_m, col_m, corner, t, dom)
        return {
            pi: joint.get(p, Fraction(0)) for pi, p in enumerate(space.profiles)
        }

    def as_vec(d: dict[int, Fraction]) -> list[Fraction]:
        return [d.get(k, Fraction(0)) for k in range(space.size)]

    t_lo = max(Fraction(0), a + b - 1)
    t_hi = min(a, b)
    if factual_cell == 1:
        # corner mass is symmetric in the two cells
        pass
    w_lo = _witness(problem, {i: as_vec(coupling(t_lo))})
    w_hi = _witness(problem, {i: as_vec(coupling(t_hi))})
    return BoundResult(problem.query, lower, upper, True, "analytic", w_lo, w_hi)


def _forced_corner_coupling(row_m, col_m, corner, t, dom):
    """Joint with given marginals and a forced corner mass.

    Feasible for any t in the two-marginal coupling range; built greedily
    with the corner row drained first.
    """
    x0, y0 = corner
    supply = {x: Fraction(row_m[x]) for x in dom}
    demand = {y: Fraction(col_m[y]) for y in dom}
    joint: dict[tuple[int, int], Fraction] = {}
    if t > 0:
        joint[(x0, y0)] = t
    supply[x0] -= t
    demand[y0] -= t
    rows = [x0] + [x for x in dom if x != x0]
    for x in rows:
        for y in dom:
            if (x, y) == (x0, y0):
                continue
            take = min(supply[x], demand[y])
            if take > 0:
                joint[(x, y)] = joint.get((x, y), Fraction(0)) + take
                supply[x] -= take
                demand[y] -= take
    if any(s != 0 for s in supply.values()) or any(d != 0 for d in demand.values()):
        raise AnalyticPatternError("coupling construction failed")
    return joint


def oracle_inner_bounds(
    obs: Distribution,
    diagram: CausalDiagram,
    query: CtfQuery,
    n: int,
    seed: int,
    *,
    domains: Mapping[str, FiniteDomain] | None = None,
) -> tuple[Fraction, Fraction]:
    """Randomized inner approximation of the optimal bound.

    Samples feasible canonical parameterizations (random-objective vertices
    and mixtures of them), reconstructs each as an explicit model, and
    evaluates the query through the engine.  Every sampled value is
    attained by a model in the feasible set, so the returned interval is
    always contained in the optimal bound.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    problem = _assemble(obs, diagram, query, domains, True, 4096, COMBO_LIMIT)
    if problem.plan.impossible:
        # the event set is contradictory: every feasible model gives 0
        return Fraction(0), Fraction(0)
    stream = SeedStream("oracle", seed)
    # A per-space pool of random-objective vertices; draws mix pool members
    # so the sampled parameterizations range over the whole polytope while
    # still landing on vertices often enough to touch the extreme points.
    pools: dict[int, list[list[Fraction]]] = {}
    for i in problem.free:
        space = problem.spaces[i]
        pool_stream = stream.child("pool", i)
        pool: list[list[Fraction]] = []
        seen = set()
        for _ in range(min(48, 4 + n)):
            v = _random_vertex(space, pool_stream)
            key = tuple(v)
            if key not in seen:
                seen.add(key)
                pool.append(v)
        pools[i] = pool

    def draw_point(i: int, s: SeedStream) -> list[Fraction]:
        pool = pools[i]
        if len(pool) == 1 or s.randrange(2) == 0:
            return pool[s.randrange(len(pool))]
        v1 = pool[s.randrange(len(pool))]
        v2 = pool[s.randrange(len(pool))]
        lam = s.fraction(997)
        return [lam * a + (1 - lam) * b for a, b in zip(v1, v2)]

    lo = hi = None
    draws = 1 if not problem.free else n
    for k in range(draws):
        assignments = {}
        for i, s in enumerate(problem.spaces):
            if s.pinned is not None:
                assignments[s.component] = (s, list(s.pinned))
            else:
                assignments[s.component] = (s, draw_point(i, stream.child(k, i)))
        scm = reconstruct_scm(
            problem.diagram,
            problem.domains,
            problem.constraints,
            assignments,
            fill="point",
            name="oracle_sample",
        )
        val = conditional_ctf(scm, query)
        if lo is None or val < lo:
            lo = val
        if hi is None or val > hi:
            hi = val
    return lo, hi
