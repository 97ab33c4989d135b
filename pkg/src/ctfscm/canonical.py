"""Canonical response-function parameterization of diagram-constrained SCMs.

Any finite SCM compatible with a causal diagram is behaviorally equivalent
to one whose variables deterministically apply a response function chosen
by a latent per-c-component factor.  Matching an observational
distribution then becomes a set of linear equalities on the per-component
response distributions (the identified c-factors), which is what turns
optimal-bound computation into exact linear or bilinear programming.

Cells are (variable, parent-assignment) pairs.  Single-variable components
may be projected onto the cells a query can actually read; the c-factor
constraints couple cells only through per-cell marginals there, so the
projected feasible set is the full Frechet coupling class and bounds are
unchanged.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .core import (
    CausalDiagram,
    EndogenousVar,
    ExogenousFactor,
    FiniteDomain,
    Scm,
    TableExpr,
)
from .engine import CtfQuery, Distribution
from .simplex import feasible_point, gaussian_solve


class BoundsInputError(Exception):
    pass


class UnidentifiedCFactorError(BoundsInputError):
    """A c-factor needed by the query has a zero-probability context."""


class ObsIncompatibleError(BoundsInputError):
    """The observational distribution cannot arise from the diagram."""


class SizeGuardError(BoundsInputError):
    pass


Cell = tuple[str, tuple[int, ...]]
DomainMap = Mapping[str, FiniteDomain]


# ---------------------------------------------------------------------------
# C-components and response types
# ---------------------------------------------------------------------------


def c_components(diagram: CausalDiagram) -> tuple[tuple[str, ...], ...]:
    """Partition of the nodes into bidirected-connected components."""
    parent = {n: n for n in diagram.nodes}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in diagram.bidirected:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    groups: dict[str, list[str]] = {}
    for n in diagram.nodes:
        groups.setdefault(find(n), []).append(n)
    order = {n: i for i, n in enumerate(diagram.nodes)}
    comps = [tuple(sorted(g, key=order.__getitem__)) for g in groups.values()]
    return tuple(sorted(comps, key=lambda c: order[c[0]]))


RESPONSE_TYPE_LIMIT = 10**6


@dataclass(frozen=True)
class ResponseTypes:
    variable: str
    parents: tuple[str, ...]
    cells: tuple[tuple[int, ...], ...]
    types: tuple[tuple[int, ...], ...]  # one value per cell


def response_types(
    variable: str,
    diagram: CausalDiagram,
    domains: DomainMap,
    limit: int = RESPONSE_TYPE_LIMIT,
) -> ResponseTypes:
    """All functions from parent assignments to values, in a fixed order.

    Refuses to materialize more than ``limit`` functions; large variables
    are handled through projection instead.
    """
    parents = diagram.parents(variable)
    cells = tuple(itertools.product(*(domains[p].values for p in parents)))
    size = len(domains[variable].values) ** len(cells)
    if size > limit:
        raise SizeGuardError(
            f"{variable} has {size} response types; project before enumerating"
        )
    types = tuple(
        itertools.product(*(domains[variable].values for _ in cells))
    )
    return ResponseTypes(variable, parents, cells, types)


# ---------------------------------------------------------------------------
# Query projection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalPass:
    """One evaluation of the model: interventions applied, checks verified."""

    interventions: tuple[tuple[str, int], ...]
    checks: tuple[tuple[str, int], ...]
    needed: tuple[str, ...]  # topological, excludes intervened variables


@dataclass(frozen=True)
class ProjectionPlan:
    indicator_passes: tuple[EvalPass, ...]  # factual joint + each ctf context
    retention_passes: tuple[EvalPass, ...]  # adds the conditioning-only pass
    retained: Mapping[str, tuple[tuple[int, ...], ...]]
    impossible: bool


def _closure(
    diagram: CausalDiagram,
    interventions: Mapping[str, int],
    checks: Mapping[str, int],
) -> tuple[str, ...]:
    needed: set[str] = set()
    stack = [v for v in checks if v not in interventions]
    while stack:
        v = stack.pop()
        if v in needed:
            continue
        needed.add(v)
        for p in diagram.parents(v):
            if p not in interventions and p not in needed:
                stack.append(p)
    topo = diagram.topo_order()
    return tuple(v for v in topo if v in needed)


def _make_pass(
    diagram: CausalDiagram,
    interventions: Mapping[str, int],
    checks: Mapping[str, int],
) -> EvalPass | None:
    """Returns None when a check on an intervened variable contradicts it."""
    eff_checks = {}
    for k, v in checks.items():
        if k in interventions:
            if interventions[k] != v:
                return None  # effectiveness makes the event impossible
            continue  # trivially true
        eff_checks[k] = v
    return EvalPass(
        tuple(sorted(interventions.items())),
        tuple(sorted(eff_checks.items())),
        _closure(diagram, interventions, eff_checks),
    )


def project_relevant_cells(
    query: CtfQuery, diagram: CausalDiagram, domains: DomainMap
) -> ProjectionPlan:
    """Parent-configuration cells a query evaluation can actually read.

    For every pass (the factual joint, the conditioning alone, and each
    counterfactual context) the possible value set of a variable is pinned
    by interventions and surviving checks and free otherwise; the cells of
    a needed variable are the products of its parents' value sets.  Only
    these cells can influence the query, so response distributions may be
    marginalized onto them.
    """
    factual_checks: dict[str, int] = {}
    impossible = False
    for k, v in query.conditioning:
        factual_checks[k] = v
    for e in query.events:
        if e.context:
            continue
        if e.variable in factual_checks and factual_checks[e.variable] != e.value:
            impossible = True
        factual_checks[e.variable] = e.value

    indicator: list[EvalPass] = []
    p = _make_pass(diagram, {}, factual_checks)
    if p is None:
        impossible = True
    else:
        indicator.append(p)
    for ctx in query.contexts():
        if not ctx:
            continue  # folded into the factual pass
        p = _make_pass(diagram, dict(ctx), query.events_in(ctx))
        if p is None:
            impossible = True
        else:
            indicator.append(p)

    den_pass = _make_pass(diagram, {}, dict(query.conditioning))
    assert den_pass is not None
    retention = tuple(indicator) + (den_pass,)

    retained: dict[str, set[tuple[int, ...]]] = {}
    if not impossible:
        for pss in retention:
            iv = dict(pss.interventions)
            checks = dict(pss.checks)
            value_set: dict[str, tuple[int, ...]] = {}
            for v in diagram.topo_order():
                if v in iv:
                    value_set[v] = (iv[v],)
                elif v in checks:
                    value_set[v] = (checks[v],)
                else:
                    value_set[v] = domains[v].values
            for v in pss.needed:
                configs = itertools.product(
                    *(value_set[p] for p in diagram.parents(v))
                )
                retained.setdefault(v, set()).update(configs)

    return ProjectionPlan(
        tuple(indicator),
        retention,
        {v: tuple(sorted(cfgs)) for v, cfgs in sorted(retained.items())},
        impossible,
    )


# ---------------------------------------------------------------------------
# C-factor constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComponentConstraints:
    """Identified c-factor of one component.

    ``targets`` maps (context assignment, member assignment) to the exact
    c-factor mass; ``undefined`` lists groups whose value is not determined
    because every witness assignment has a zero-probability prefix.
    """

    component: tuple[str, ...]
    context_vars: tuple[str, ...]
    targets: Mapping[tuple[tuple[int, ...], tuple[int, ...]], Fraction]
    undefined: frozenset[tuple[tuple[int, ...], tuple[int, ...]]]

    def marginal(self, variable: str, cell: tuple[int, ...], value: int):
        """Single-variable components: identified P(value | parent cell)."""
        key = (cell, (value,))
        if key in self.undefined:
            return None
        return self.targets.get(key)


def build_constraints(
    obs: Distribution, diagram: CausalDiagram, domains: DomainMap
) -> dict[tuple[str, ...], ComponentConstraints]:
    """Identified c-factors under the semi-Markovian factorization.

    Each component's factor is the product of the members' conditionals on
    all predecessors in a fixed topological order; the diagram guarantees
    the product depends only on the component and its parents, which is
    verified exactly and reported as incompatibility when violated.
    """
    order = diagram.topo_order()
    for v in order:
        if v not in obs.variables:
            raise BoundsInputError(f"observational distribution lacks {v!r}")

    # prefix marginal tables, one per prefix length
    prefix_tables: list[dict[tuple[int, ...], Fraction]] = []
    for i in range(len(order) + 1):
        prefix_tables.append({})
    idx_of = {v: obs.variables.index(v) for v in order}
    for key, mass in obs.table.items():
        if mass == 0:
            continue
        ordered = tuple(key[idx_of[v]] for v in order)
        for i in range(len(order) + 1):
            pre = ordered[:i]
            prefix_tables[i][pre] = prefix_tables[i].get(pre, Fraction(0)) + mass

    out: dict[tuple[str, ...], ComponentConstraints] = {}
    pos = {v: i for i, v in enumerate(order)}
    for comp in c_components(diagram):
        members = set(comp)
        context_vars = tuple(
            v
            for v in order
            if v not in members
            and any(v in diagram.parents(m) for m in comp)
        )
        targets: dict[tuple[tuple[int, ...], tuple[int, ...]], Fraction] = {}
        undefined: set[tuple[tuple[int, ...], tuple[int, ...]]] = set()
        for full in itertools.product(*(domains[v].values for v in order)):
            kappa = tuple(full[pos[v]] for v in context_vars)
            gamma = tuple(full[pos[v]] for v in comp)
            key = (kappa, gamma)
            value: Fraction | None = Fraction(1)
            for m in comp:
                i = pos[m]
                denom = prefix_tables[i].get(full[:i], Fraction(0))
                if denom == 0:
                    value = None
                    break
                numer = prefix_tables[i + 1].get(full[: i + 1], Fraction(0))
                value *= numer / denom
            if value is None:
                if key not in targets:
                    undefined.add(key)
                continue
            if key in targets:
                if targets[key] != value:
                    raise ObsIncompatibleError(
                        f"c-factor of {comp} is not a function of "
                        f"{comp + context_vars}: the distribution violates "
                        "an independence implied by the diagram"
                    )
            else:
                targets[key] = value
                undefined.discard(key)
        out[comp] = ComponentConstraints(
            comp, context_vars, targets, frozenset(undefined)
        )
    return out


# ---------------------------------------------------------------------------
# Component parameter spaces
# ---------------------------------------------------------------------------

SPACE_PROFILE_LIMIT = 4096


@dataclass
class ComponentSpace:
    """Joint distribution over response values at a set of cells.

    ``profiles`` enumerates one value per cell; the parameter is a
    probability vector over profiles.  ``pinned`` holds the unique
    solution when the equality system admits exactly one.
    """

    component: tuple[str, ...]
    cells: tuple[Cell, ...]
    profiles: tuple[tuple[int, ...], ...]
    projected: bool
    rows: list[tuple[list[Fraction], Fraction]]  # equality rows incl. total
    pinned: list[Fraction] | None
    warm_lp: object = None  # lazily attached phase-one cache

    @property
    def size(self) -> int:
        return len(self.profiles)

    def cell_index(self) -> dict[Cell, int]:
        return {c: i for i, c in enumerate(self.cells)}


def _profile_rows_full(
    comp: tuple[str, ...],
    cells: tuple[Cell, ...],
    profiles: Sequence[tuple[int, ...]],
    diagram: CausalDiagram,
    domains: DomainMap,
    cons: ComponentConstraints,
    touched: bool,
) -> list[tuple[list[Fraction], Fraction]]:
    index = {c: i for i, c in enumerate(cells)}
    topo_members = [v for v in diagram.topo_order() if v in comp]
    rows: list[tuple[list[Fraction], Fraction]] = []
    ctx_domains = [domains[v].values for v in cons.context_vars]
    for kappa in itertools.product(*ctx_domains):
        env_base = dict(zip(cons.context_vars, kappa))
        buckets: dict[tuple[int, ...], list[int]] = {}
        for p_i, profile in enumerate(profiles):
            env = dict(env_base)
            for m in topo_members:
                pa = tuple(env[x] for x in diagram.parents(m))
                env[m] = profile[index[(m, pa)]]
            gamma = tuple(env[m] for m in comp)
            buckets.setdefault(gamma, []).append(p_i)
        for gamma, idxs in sorted(buckets.items()):
            key = (kappa, gamma)
            if key in cons.undefined:
                if touched:
                    raise UnidentifiedCFactorError(
                        f"c-factor of {comp} at context {kappa} is not "
                        "identified (zero-probability context)"
                    )
                continue
            target = cons.targets[key]
            coeffs = [Fraction(0)] * len(profiles)
            for i in idxs:
                coeffs[i] = Fraction(1)
            rows.append((coeffs, target))
    return rows


def build_space(
    comp: tuple[str, ...],
    diagram: CausalDiagram,
    domains: DomainMap,
    cons: ComponentConstraints,
    retained: Mapping[str, tuple[tuple[int, ...], ...]] | None,
    touched: bool,
    limit: int = SPACE_PROFILE_LIMIT,
) -> ComponentSpace:
    """Full space for multi-variable components, projected for single ones.

    ``retained=None`` forces the full space.
    """
    if retained is not None and len(comp) == 1:
        var = comp[0]
        cell_cfgs = retained.get(var, ())
        cells = tuple((var, cfg) for cfg in cell_cfgs)
        size = len(domains[var].values) ** len(cells)
        if size > limit:
            raise SizeGuardError(
                f"projected space for {var} needs {size} profiles"
            )
        profiles = tuple(
            itertools.product(*(domains[var].values for _ in cells))
        )
        rows: list[tuple[list[Fraction], Fraction]] = []
        rows.append(([Fraction(1)] * len(profiles), Fraction(1)))
        for ci, (v, cfg) in enumerate(cells):
            for val in domains[v].values:
                m = cons.marginal(v, cfg, val)
                if m is None:
                    raise UnidentifiedCFactorError(
                        f"P({v} | parents={cfg}) is unidentified "
                        "(zero-probability context needed by the query)"
                    )
                coeffs = [
                    Fraction(1) if p[ci] == val else Fraction(0)
                    for p in profiles
                ]
                rows.append((coeffs, m))
        space = ComponentSpace(comp, cells, profiles, True, rows, None)
    else:
        cells_list: list[Cell] = []
        for v in comp:
            for cfg in itertools.product(
                *(domains[p].values for p in diagram.parents(v))
            ):
                cells_list.append((v, cfg))
        cells = tuple(cells_list)
        size = 1
        for v, _ in cells:
            size *= len(domains[v].values)
            if size > limit:
                raise SizeGuardError(
                    f"full response space of {comp} needs more than "
                    f"{limit} profiles; projection required"
                )
        profiles = tuple(
            itertools.product(*(domains[v].values for v, _ in cells))
        )
        rows = [([Fraction(1)] * len(profiles), Fraction(1))]
        rows.extend(
            _profile_rows_full(comp, cells, profiles, diagram, domains, cons,
                               touched)
        )
        space = ComponentSpace(comp, cells, profiles, False, rows, None)

    A = [r for r, _ in space.rows]
    b = [rhs for _, rhs in space.rows]
    kind, solution = gaussian_solve(A, b, space.size)
    if kind == "inconsistent":
        raise ObsIncompatibleError(
            f"no response distribution over {comp} matches the distribution"
        )
    if kind == "unique":
        if any(x < 0 for x in solution):
            raise ObsIncompatibleError(
                f"the unique response distribution over {comp} is signed; "
                "the distribution is incompatible with the diagram"
            )
        space.pinned = solution
    return space


# ---------------------------------------------------------------------------
# Reconstruction of explicit SCMs from parameterizations
# ---------------------------------------------------------------------------


def _lcm(a: int, b: int) -> int:
    g, x = a, b
    while x:
        g, x = x, g % x
    return a * b // g


def _sanitize(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name)


def reconstruct_scm(
    diagram: CausalDiagram,
    domains: DomainMap,
    constraints: Mapping[tuple[str, ...], ComponentConstraints],
    assignments: Mapping[tuple[str, ...], tuple[ComponentSpace, Sequence[Fraction]]],
    fill: str = "exact",
    name: str = "reconstructed",
) -> Scm:
    """Explicit SCM realizing the given per-component response weights.

    Cells outside a projected space follow the identified per-cell
    marginal via an inverse-cdf over a shared uniform factor (``exact``),
    which reproduces the observational distribution, or a constant
    (``point``), which is cheaper and query-equivalent because those cells
    are provably never read on atoms that satisfy the query's checks.
    """
    factors: list[ExogenousFactor] = []
    mechanisms: dict[str, tuple[tuple[str, ...], dict]] = {}

    for comp in c_components(diagram):
        cons = constraints[comp]
        if comp in assignments:
            space, q = assignments[comp]
        else:
            space, q = _default_assignment(comp, diagram, domains, cons, fill)
        atoms = [(i, Fraction(m)) for i, m in enumerate(q) if m != 0]
        if not atoms:
            raise BoundsInputError(f"empty parameterization for {comp}")
        use_comp_factor = bool(space.cells)
        uname = "U_c_" + _sanitize("_".join(comp))
        if use_comp_factor:
            factors.append(
                ExogenousFactor(
                    uname,
                    FiniteDomain(tuple(range(len(atoms)))),
                    {i: m for i, (_, m) in enumerate(atoms)},
                )
            )
        index = space.cell_index()
        for v in comp:
            parents = diagram.parents(v)
            all_cfgs = list(
                itertools.product(*(domains[p].values for p in parents))
            )
            missing = [cfg for cfg in all_cfgs if (v, cfg) not in index]
            if missing and len(comp) > 1:
                raise BoundsInputError(
                    f"multi-variable component {comp} must use its full "
                    f"space; {v} lacks cell {missing[0]}"
                )
            fill_dists: dict[tuple[int, ...], list[tuple[int, Fraction]]] = {}
            grain = 1
            for cfg in missing:
                if fill == "point":
                    dist = [(domains[v].values[0], Fraction(1))]
                else:
                    dist = [
                        (val, cons.marginal(v, cfg, val))
                        for val in domains[v].values
                    ]
                    if any(m is None for _, m in dist):
                        # zero-probability context: observationally inert
                        dist = [(domains[v].values[0], Fraction(1))]
                fill_dists[cfg] = dist
                for _, m in dist:
                    grain = _lcm(grain, m.denominator)
            fname = f"U_fill_{_sanitize(v)}"
            use_fill = bool(missing) and grain > 1
            if use_fill:
                factors.append(ExogenousFactor.uniform(fname, 0, grain - 1))

            inputs = list(parents)
            if use_comp_factor:
                inputs.append(uname)
            if use_fill:
                inputs.append(fname)
            atom_range = range(len(atoms)) if use_comp_factor else [None]
            fill_range = range(grain) if use_fill else [None]
            mapping: dict[tuple[int, ...], int] = {}
            for cfg in all_cfgs:
                for a_i in atom_range:
                    for u in fill_range:
                        if (v, cfg) in index:
                            orig, _ = atoms[a_i]
                            val = space.profiles[orig][index[(v, cfg)]]
                        elif u is not None:
                            val = _inverse_cdf(fill_dists[cfg], u, grain)
                        else:
                            val = next(
                                x for x, m in fill_dists[cfg] if m > 0
                            )
                        key = cfg
                        if a_i is not None:
                            key = key + (a_i,)
                        if u is not None:
                            key = key + (u,)
                        mapping[key] = val
            mechanisms[v] = (tuple(inputs), mapping)

    endos = tuple(
        EndogenousVar(v, domains[v], TableExpr(*mechanisms[v]))
        for v in diagram.nodes
    )
    return Scm(name, tuple(factors), endos)


def _inverse_cdf(dist: list[tuple[int, Fraction]], u: int, grain: int) -> int:
    acc = 0
    for val, mass in dist:
        acc += int(mass * grain)
        if u < acc:
            return val
    return dist[-1][0]


def _default_assignment(comp, diagram, domains, cons, fill):
    """Parameterization for a component untouched by the query."""
    if len(comp) == 1:
        space = ComponentSpace(comp, (), ((),), True, [], [Fraction(1)])
        return space, [Fraction(1)]
    if fill == "point":
        # Constant responses; contributions marginalize out of any query
        # that never reads this component.
        cells_list: list[Cell] = []
        for v in comp:
            for cfg in itertools.product(
                *(domains[p].values for p in diagram.parents(v))
            ):
                cells_list.append((v, cfg))
        cells = tuple(cells_list)
        profile = tuple(domains[v].values[0] for v, _ in cells)
        space = ComponentSpace(comp, cells, (profile,), False, [], [Fraction(1)])
        return space, [Fraction(1)]
    space = build_space(comp, diagram, domains, cons, None, touched=False)
    if space.pinned is not None:
        return space, space.pinned
    A = [r for r, _ in space.rows]
    b = [rhs for _, rhs in space.rows]
    point = feasible_point(A, b, space.size)
    if point is None:
        raise ObsIncompatibleError(
            f"no response distribution over {comp} matches the distribution"
        )
    return space, point
