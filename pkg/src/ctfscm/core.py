"""Finite structural causal models with exact rational semantics.

An :class:`Scm` couples a set of mutually independent exogenous factors,
each with a finite support and an exact-rational pmf, with an ordered list
of endogenous variables computed by deterministic mechanism expressions.
Everything downstream (enumeration, bounds, consistency checks) relies on
the joint exogenous support being small enough to enumerate exhaustively,
so no floating point ever enters the semantics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping, Sequence, Union


class ScmError(Exception):
    """Base class for model construction and evaluation errors."""


class CyclicModelError(ScmError):
    pass


class MechanismEvalError(ScmError):
    pass


# ---------------------------------------------------------------------------
# Mechanism expressions
# ---------------------------------------------------------------------------
#
# Mechanisms are deterministic integer expression trees in prefix form.
# Boolean connectives demand {0,1} operands; comparisons produce {0,1}.
# There is deliberately no infix syntax anywhere, which keeps the built-in
# models free of precedence ambiguity.


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Xor:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Eq:
    arg: "Expr"
    const: int


@dataclass(frozen=True)
class Ge:
    arg: "Expr"
    const: int


@dataclass(frozen=True)
class Lt:
    arg: "Expr"
    const: int


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    arg: "Expr"
    const: int


@dataclass(frozen=True, eq=True)
class TableExpr:
    """Explicit function table over named inputs.

    ``mapping`` must cover the full cartesian product of the inputs'
    domains; :func:`validate` checks totality.
    """

    inputs: tuple[str, ...]
    mapping: Mapping[tuple[int, ...], int]

    def __hash__(self):  # mapping is a dict; hash by identity-free content
        return hash((self.inputs, tuple(sorted(self.mapping.items()))))


Expr = Union[Const, Ref, Not, And, Or, Xor, Eq, Ge, Lt, Add, Sub, Mul, TableExpr]

_BOOL_OPS = (Not, And, Or, Xor)


def _as_bool(v: int, where: str) -> int:
    if v not in (0, 1):
        raise MechanismEvalError(
            f"boolean operand out of {{0,1}} in {where}: got {v}"
        )
    return v


def eval_expr(expr: Expr, env: Mapping[str, int]) -> int:
    """Evaluate a mechanism expression under a total variable assignment."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Ref):
        try:
            return env[expr.name]
        except KeyError:
            raise MechanismEvalError(f"unbound variable {expr.name!r}") from None
    if isinstance(expr, Not):
        return 1 - _as_bool(eval_expr(expr.arg, env), "not")
    if isinstance(expr, And):
        return _as_bool(eval_expr(expr.left, env), "and") & _as_bool(
            eval_expr(expr.right, env), "and"
        )
    if isinstance(expr, Or):
        return _as_bool(eval_expr(expr.left, env), "or") | _as_bool(
            eval_expr(expr.right, env), "or"
        )
    if isinstance(expr, Xor):
        return _as_bool(eval_expr(expr.left, env), "xor") ^ _as_bool(
            eval_expr(expr.right, env), "xor"
        )
    if isinstance(expr, Eq):
        return 1 if eval_expr(expr.arg, env) == expr.const else 0
    if isinstance(expr, Ge):
        return 1 if eval_expr(expr.arg, env) >= expr.const else 0
    if isinstance(expr, Lt):
        return 1 if eval_expr(expr.arg, env) < expr.const else 0
    if isinstance(expr, Add):
        return eval_expr(expr.left, env) + eval_expr(expr.right, env)
    if isinstance(expr, Sub):
        return eval_expr(expr.left, env) - eval_expr(expr.right, env)
    if isinstance(expr, Mul):
        return eval_expr(expr.arg, env) * expr.const
    if isinstance(expr, TableExpr):
        key = tuple(env[name] for name in expr.inputs)
        try:
            return expr.mapping[key]
        except KeyError:
            raise MechanismEvalError(
                f"table missing entry for inputs {expr.inputs} = {key}"
            ) from None
    raise MechanismEvalError(f"unknown expression node {expr!r}")


def expr_refs(expr: Expr) -> set[str]:
    """All variable names referenced by an expression."""
    out: set[str] = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Ref):
            out.add(node.name)
        elif isinstance(node, TableExpr):
            out.update(node.inputs)
        elif isinstance(node, (Not, Eq, Ge, Lt, Mul)):
            stack.append(node.arg)
        elif isinstance(node, (And, Or, Xor, Add, Sub)):
            stack.append(node.left)
            stack.append(node.right)
    return out


# ---------------------------------------------------------------------------
# Domains, factors, variables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteDomain:
    """Ordered finite set of integer codes; canonical order is ascending."""

    values: tuple[int, ...]

    def __post_init__(self):
        if not self.values:
            raise ScmError("empty domain")
        if len(set(self.values)) != len(self.values):
            raise ScmError(f"duplicate domain values: {self.values}")
        if tuple(sorted(self.values)) != self.values:
            raise ScmError(f"domain not in ascending order: {self.values}")

    def __len__(self) -> int:
        return len(self.values)

    def __contains__(self, v: int) -> bool:
        return v in self.values


BINARY = FiniteDomain((0, 1))


@dataclass(frozen=True, eq=True)
class ExogenousFactor:
    """Exogenous variable with finite support and exact-rational pmf."""

    name: str
    support: FiniteDomain
    pmf: Mapping[int, Fraction]

    def __hash__(self):
        return hash((self.name, self.support, tuple(sorted(self.pmf.items()))))

    @staticmethod
    def bernoulli(name: str, p: Fraction) -> "ExogenousFactor":
        p = Fraction(p)
        return ExogenousFactor(name, BINARY, {0: 1 - p, 1: p})

    @staticmethod
    def uniform(name: str, lo: int, hi: int) -> "ExogenousFactor":
        vals = tuple(range(lo, hi + 1))
        mass = Fraction(1, len(vals))
        return ExogenousFactor(name, FiniteDomain(vals), {v: mass for v in vals})

    @staticmethod
    def from_pmf(name: str, pmf: Mapping[int, Fraction]) -> "ExogenousFactor":
        return ExogenousFactor(
            name,
            FiniteDomain(tuple(sorted(pmf))),
            {k: Fraction(v) for k, v in pmf.items()},
        )


@dataclass(frozen=True)
class EndogenousVar:
    name: str
    domain: FiniteDomain
    mechanism: Expr


@dataclass(frozen=True, eq=True)
class Scm:
    """Finite structural causal model.

    Exogenous factors are canonicalized by name at construction; endogenous
    declaration order is preserved and used as the canonical variable order.
    Instances are immutable; :func:`mutilate` returns a new model sharing
    untouched parts.
    """

    name: str
    exogenous: tuple[ExogenousFactor, ...]
    endogenous: tuple[EndogenousVar, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "exogenous", tuple(sorted(self.exogenous, key=lambda f: f.name))
        )

    # -- lookups ------------------------------------------------------------

    @property
    def exo_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.exogenous)

    @property
    def endo_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.endogenous)

    def exo(self, name: str) -> ExogenousFactor:
        for f in self.exogenous:
            if f.name == name:
                return f
        raise KeyError(name)

    def var(self, name: str) -> EndogenousVar:
        for v in self.endogenous:
            if v.name == name:
                return v
        raise KeyError(name)

    def domain(self, name: str) -> FiniteDomain:
        for v in self.endogenous:
            if v.name == name:
                return v.domain
        for f in self.exogenous:
            if f.name == name:
                return f.support
        raise KeyError(name)

    def endo_parents(self, name: str) -> tuple[str, ...]:
        endo = set(self.endo_names)
        refs = expr_refs(self.var(name).mechanism)
        return tuple(v for v in self.endo_names if v in refs and v in endo)

    def topo_order(self) -> tuple[str, ...]:
        """Topological order of endogenous variables; raises on cycles."""
        endo = set(self.endo_names)
        deps = {
            v.name: expr_refs(v.mechanism) & endo for v in self.endogenous
        }
        order: list[str] = []
        done: set[str] = set()
        mark: set[str] = set()

        def visit(n: str, chain: tuple[str, ...]):
            if n in done:
                return
            if n in mark:
                cycle = chain[chain.index(n):] + (n,)
                raise CyclicModelError("cycle: " + " -> ".join(cycle))
            mark.add(n)
            for d in sorted(deps[n]):
                visit(d, chain + (n,))
            mark.discard(n)
            done.add(n)
            order.append(n)

        for v in self.endo_names:
            visit(v, ())
        return tuple(order)

    def atom_count(self) -> int:
        n = 1
        for f in self.exogenous:
            n *= len(f.support)
        return n


Assignment = dict[str, int]
Intervention = Mapping[str, int]


@dataclass(frozen=True)
class CausalDiagram:
    """Directed + bidirected graph over endogenous variable names."""

    nodes: tuple[str, ...]
    directed: frozenset[tuple[str, str]]
    bidirected: frozenset[tuple[str, str]]  # pairs stored sorted by node order

    def __post_init__(self):
        known = set(self.nodes)
        for a, b in self.directed:
            if a not in known or b not in known:
                raise ScmError(f"edge {a}->{b} uses undeclared node")
        for a, b in self.bidirected:
            if a not in known or b not in known:
                raise ScmError(f"edge {a}<->{b} uses undeclared node")
        self.topo_order()  # raises on a directed cycle

    def parents(self, v: str) -> tuple[str, ...]:
        ps = {a for a, b in self.directed if b == v}
        return tuple(n for n in self.nodes if n in ps)

    def children(self, v: str) -> tuple[str, ...]:
        cs = {b for a, b in self.directed if a == v}
        return tuple(n for n in self.nodes if n in cs)

    def descendants(self, vs: Sequence[str]) -> set[str]:
        out = set(vs)
        frontier = list(vs)
        while frontier:
            v = frontier.pop()
            for c in self.children(v):
                if c not in out:
                    out.add(c)
                    frontier.append(c)
        return out

    def topo_order(self) -> tuple[str, ...]:
        indeg = {n: 0 for n in self.nodes}
        for _, b in self.directed:
            indeg[b] += 1
        ready = [n for n in self.nodes if indeg[n] == 0]
        order: list[str] = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in self.children(n):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != len(self.nodes):
            raise CyclicModelError("directed part of the diagram has a cycle")
        return tuple(order)

    @staticmethod
    def build(
        nodes: Sequence[str],
        directed: Sequence[tuple[str, str]] = (),
        bidirected: Sequence[tuple[str, str]] = (),
    ) -> "CausalDiagram":
        nodes = tuple(nodes)
        index = {n: i for i, n in enumerate(nodes)}
        bd = frozenset(
            tuple(sorted(pair, key=index.__getitem__)) for pair in bidirected
        )
        return CausalDiagram(nodes, frozenset(directed), bd)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def induce_diagram(scm: Scm) -> CausalDiagram:
    """Diagram induced by mechanism references.

    A directed edge goes from each endogenous variable referenced by a
    mechanism to its output; a bidirected edge links two endogenous
    variables whose mechanisms read a common exogenous factor.
    """
    endo = set(scm.endo_names)
    exo_users: dict[str, list[str]] = {f.name: [] for f in scm.exogenous}
    directed = set()
    for v in scm.endogenous:
        refs = expr_refs(v.mechanism)
        for r in refs:
            if r in endo:
                directed.add((r, v.name))
            elif r in exo_users:
                exo_users[r].append(v.name)
    bidirected = set()
    for users in exo_users.values():
        for a, b in itertools.combinations(users, 2):
            bidirected.add((a, b))
    return CausalDiagram.build(scm.endo_names, sorted(directed), sorted(bidirected))


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    subject: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple[ValidationIssue, ...]

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(f"[{i.kind}] {i.subject}: {i.message}" for i in self.issues)


def validate(scm: Scm) -> ValidationReport:
    """Full structural check: names, pmfs, acyclicity, domain closure.

    Domain closure is verified exhaustively over the exogenous joint
    support, so a passing report guarantees that ``solve`` can never
    produce an out-of-domain value.
    """
    issues: list[ValidationIssue] = []
    names = list(scm.exo_names) + list(scm.endo_names)
    for n in sorted({x for x in names if names.count(x) > 1}):
        issues.append(ValidationIssue("duplicate", n, "name declared more than once"))

    for f in scm.exogenous:
        if set(f.pmf) != set(f.support.values):
            issues.append(
                ValidationIssue("pmf", f.name, "pmf keys do not match support")
            )
            continue
        if any(m < 0 for m in f.pmf.values()):
            issues.append(ValidationIssue("pmf", f.name, "negative mass"))
        total = sum(f.pmf.values(), Fraction(0))
        if total != 1:
            issues.append(
                ValidationIssue("pmf", f.name, f"masses sum to {total}, not 1")
            )

    known = set(names)
    for v in scm.endogenous:
        for r in sorted(expr_refs(v.mechanism)):
            if r not in known:
                issues.append(
                    ValidationIssue("unresolved", v.name, f"unknown variable {r!r}")
                )

    if not any(i.kind == "unresolved" for i in issues):
        try:
            scm.topo_order()
        except CyclicModelError as e:
            issues.append(ValidationIssue("cycle", scm.name, str(e)))

    for v in scm.endogenous:
        mech = v.mechanism
        if isinstance(mech, TableExpr):
            try:
                domains = [scm.domain(i).values for i in mech.inputs]
            except KeyError:
                continue  # already reported as unresolved
            expected = set(itertools.product(*domains))
            got = set(mech.mapping)
            if expected - got:
                missing = sorted(expected - got)[0]
                issues.append(
                    ValidationIssue(
                        "table",
                        v.name,
                        f"table misses {len(expected - got)} entries, e.g. {missing}",
                    )
                )
            if got - expected:
                issues.append(
                    ValidationIssue(
                        "table", v.name, "table has entries outside input domains"
                    )
                )

    if not issues:
        for u, _mass in iter_atoms(scm):
            try:
                vals = solve(scm, u)
            except MechanismEvalError as e:
                issues.append(ValidationIssue("boolean", scm.name, f"{e} at u={u}"))
                break
            bad = [
                (v.name, vals[v.name])
                for v in scm.endogenous
                if vals[v.name] not in v.domain
            ]
            if bad:
                name, val = bad[0]
                issues.append(
                    ValidationIssue(
                        "domain", name, f"mechanism produced {val} at u={u}"
                    )
                )
                break

    return ValidationReport(not issues, tuple(issues))


def mutilate(scm: Scm, intervention: Intervention) -> Scm:
    """Submodel with intervened mechanisms replaced by constants."""
    if not intervention:
        return scm
    endo = {v.name: v for v in scm.endogenous}
    for k, val in intervention.items():
        if k not in endo:
            raise ScmError(f"cannot intervene on non-endogenous {k!r}")
        if val not in endo[k].domain:
            raise ScmError(f"value {val} outside domain of {k}")
    new_vars = tuple(
        EndogenousVar(v.name, v.domain, Const(intervention[v.name]))
        if v.name in intervention
        else v
        for v in scm.endogenous
    )
    return Scm(scm.name, scm.exogenous, new_vars)


def solve(scm: Scm, u: Mapping[str, int]) -> Assignment:
    """Deterministic solution of all endogenous variables given U = u."""
    env: Assignment = dict(u)
    for name in scm.topo_order():
        env[name] = eval_expr(scm.var(name).mechanism, env)
    return {v: env[v] for v in scm.endo_names}


def iter_atoms(scm: Scm) -> Iterator[tuple[Assignment, Fraction]]:
    """Enumerate the exogenous joint support with exact masses.

    Factors are mutually independent, so the joint mass is the product of
    the factor pmfs.  Zero-mass atoms are skipped.
    """
    factors = scm.exogenous
    supports = [f.support.values for f in factors]
    for combo in itertools.product(*supports):
        mass = Fraction(1)
        for f, v in zip(factors, combo):
            mass *= f.pmf[v]
            if mass == 0:
                break
        if mass == 0:
            continue
        yield {f.name: v for f, v in zip(factors, combo)}, mass


class _SolveCache:
    """Precompiled topological evaluator for hot enumeration loops."""

    __slots__ = ("order", "mechs", "endo")

    def __init__(self, scm: Scm):
        self.order = scm.topo_order()
        self.mechs = {v.name: v.mechanism for v in scm.endogenous}
        self.endo = scm.endo_names

    def __call__(self, u: Mapping[str, int]) -> Assignment:
        env: Assignment = dict(u)
        for name in self.order:
            env[name] = eval_expr(self.mechs[name], env)
        return {v: env[v] for v in self.endo}


def solver(scm: Scm) -> _SolveCache:
    return _SolveCache(scm)
