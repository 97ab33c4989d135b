"""Exact evaluation of observational, interventional, and counterfactual
probabilities by enumeration over the exogenous joint support.

A counterfactual query is a conjunction of events, each carrying its own
intervention context, optionally conditioned on factual events.  The joint
probability sums the masses of exogenous atoms for which every event holds
under the corresponding mutilated model and every conditioning event holds
factually; conditioning is included in the joint and divided out, never
filtered before enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .core import (
    Intervention,
    Scm,
    induce_diagram,
    iter_atoms,
    mutilate,
    solver,
)


class EngineError(Exception):
    pass


class ZeroConditioningError(EngineError):
    """Raised when a conditional query conditions on a null event."""


@dataclass(frozen=True)
class Distribution:
    """Exact probability table over an ordered tuple of variables.

    Zero-mass rows may be omitted; masses must sum to exactly 1.
    """

    variables: tuple[str, ...]
    table: Mapping[tuple[int, ...], Fraction]

    def __post_init__(self):
        total = sum(self.table.values(), Fraction(0))
        if total != 1:
            raise EngineError(f"distribution sums to {total}, not 1")
        if any(m < 0 for m in self.table.values()):
            raise EngineError("negative mass in distribution")

    def items(self):
        return sorted(self.table.items())

    def prob(self, event: Mapping[str, int]) -> Fraction:
        """Probability of a (partial) assignment event."""
        unknown = set(event) - set(self.variables)
        if unknown:
            raise EngineError(f"unknown variables {sorted(unknown)}")
        idx = [(self.variables.index(k), v) for k, v in event.items()]
        total = Fraction(0)
        for key, mass in self.table.items():
            if all(key[i] == v for i, v in idx):
                total += mass
        return total

    def marginal(self, variables: Sequence[str]) -> "Distribution":
        variables = tuple(variables)
        idx = [self.variables.index(v) for v in variables]
        out: dict[tuple[int, ...], Fraction] = {}
        for key, mass in self.table.items():
            sub = tuple(key[i] for i in idx)
            out[sub] = out.get(sub, Fraction(0)) + mass
        return Distribution(variables, out)

    def conditional(self, given: Mapping[str, int]) -> "Distribution":
        """Distribution of the remaining variables given an assignment."""
        denom = self.prob(given)
        if denom == 0:
            raise ZeroConditioningError(f"conditioning event {given} has mass 0")
        keep = tuple(v for v in self.variables if v not in given)
        idx_keep = [self.variables.index(v) for v in keep]
        idx_given = [(self.variables.index(k), v) for k, v in given.items()]
        out: dict[tuple[int, ...], Fraction] = {}
        for key, mass in self.table.items():
            if mass == 0 or not all(key[i] == v for i, v in idx_given):
                continue
            sub = tuple(key[i] for i in idx_keep)
            out[sub] = out.get(sub, Fraction(0)) + mass / denom
        return Distribution(keep, out)

    def tv_distance(self, other: "Distribution") -> Fraction:
        """Total variation distance; variables are aligned by name."""
        if set(self.variables) != set(other.variables):
            raise EngineError("distributions are over different variables")
        remap = [other.variables.index(v) for v in self.variables]
        other_aligned: dict[tuple[int, ...], Fraction] = {}
        for key, mass in other.table.items():
            other_aligned[tuple(key[i] for i in remap)] = mass
        keys = set(self.table) | set(other_aligned)
        diff = sum(
            abs(self.table.get(k, Fraction(0)) - other_aligned.get(k, Fraction(0)))
            for k in keys
        )
        return diff / 2

    def to_json_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "table": {
                ",".join(str(x) for x in key): f"{m.numerator}/{m.denominator}"
                for key, m in self.items()
                if m != 0
            },
        }


Context = tuple[tuple[str, int], ...]  # sorted (variable, value) pairs


def _ctx(intervention: Mapping[str, int]) -> Context:
    return tuple(sorted(intervention.items()))


@dataclass(frozen=True)
class CtfEvent:
    variable: str
    value: int
    context: Context = ()

    def pretty(self) -> str:
        if not self.context:
            return f"{self.variable}={self.value}"
        inner = ",".join(f"{k}={v}" for k, v in self.context)
        return f"{self.variable}[{inner}]={self.value}"


@dataclass(frozen=True)
class CtfQuery:
    """Joint counterfactual event with optional factual conditioning."""

    events: tuple[CtfEvent, ...]
    conditioning: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        seen = set()
        for e in self.events:
            key = (e.variable, e.context)
            if key in seen:
                raise EngineError(
                    f"duplicate event for {e.variable} in context {dict(e.context)}"
                )
            seen.add(key)
        cvars = [k for k, _ in self.conditioning]
        if len(cvars) != len(set(cvars)):
            raise EngineError("duplicate variable in conditioning")

    def contexts(self) -> list[Context]:
        out: list[Context] = []
        for e in self.events:
            if e.context not in out:
                out.append(e.context)
        return out

    def events_in(self, context: Context) -> dict[str, int]:
        return {
            e.variable: e.value for e in self.events if e.context == context
        }

    def pretty(self) -> str:
        body = ", ".join(e.pretty() for e in self.events)
        if self.conditioning:
            cond = ", ".join(f"{k}={v}" for k, v in self.conditioning)
            return f"P({body} | {cond})"
        return f"P({body})"

    @staticmethod
    def build(
        events: Sequence[tuple[str, int, Mapping[str, int]]],
        conditioning: Mapping[str, int] | Sequence[tuple[str, int]] = (),
    ) -> "CtfQuery":
        evs = tuple(
            CtfEvent(var, val, _ctx(ctx)) for var, val, ctx in events
        )
        cond = (
            tuple(sorted(conditioning.items()))
            if isinstance(conditioning, Mapping)
            else tuple(conditioning)
        )
        return CtfQuery(evs, cond)


def _check_query(scm: Scm, query: CtfQuery) -> None:
    endo = set(scm.endo_names)
    for e in query.events:
        if e.variable not in endo:
            raise EngineError(f"event variable {e.variable!r} is not endogenous")
        if e.value not in scm.var(e.variable).domain:
            raise EngineError(f"value {e.value} outside domain of {e.variable}")
        for k, v in e.context:
            if k not in endo:
                raise EngineError(f"intervention target {k!r} is not endogenous")
            if v not in scm.var(k).domain:
                raise EngineError(f"value {v} outside domain of {k}")
    for k, v in query.conditioning:
        if k not in endo:
            raise EngineError(f"conditioning variable {k!r} is not endogenous")
        if v not in scm.var(k).domain:
            raise EngineError(f"value {v} outside domain of {k}")


def observational(scm: Scm, variables: Sequence[str] | None = None) -> Distribution:
    """Exact P(V) (or a marginal of it) by exhaustive enumeration."""
    if variables is None:
        variables = scm.endo_names
    variables = tuple(variables)
    for v in variables:
        if v not in scm.endo_names:
            raise EngineError(f"unknown variable {v!r}")
    run = solver(scm)
    table: dict[tuple[int, ...], Fraction] = {}
    for u, mass in iter_atoms(scm):
        vals = run(u)
        key = tuple(vals[v] for v in variables)
        table[key] = table.get(key, Fraction(0)) + mass
    return Distribution(variables, table)


def interventional(
    scm: Scm, intervention: Intervention, variables: Sequence[str] | None = None
) -> Distribution:
    """P(V | do(x)) as the observational distribution of the submodel."""
    return observational(mutilate(scm, intervention), variables)


def counterfactual_joint(scm: Scm, query: CtfQuery) -> Fraction:
    """Unnormalized joint probability of all events plus conditioning.

    One pass over the exogenous atoms evaluates the factual model and each
    distinct mutilated model per atom.
    """
    _check_query(scm, query)
    contexts = query.contexts()
    runners = []
    for ctx in contexts:
        sub = mutilate(scm, dict(ctx))
        runners.append((solver(sub), query.events_in(ctx)))
    factual = solver(scm)
    conditioning = dict(query.conditioning)
    total = Fraction(0)
    for u, mass in iter_atoms(scm):
        if conditioning:
            vals = factual(u)
            if any(vals[k] != v for k, v in conditioning.items()):
                continue
        good = True
        for run, checks in runners:
            if not checks:
                continue
            vals = run(u)
            if any(vals[k] != v for k, v in checks.items()):
                good = False
                break
        if good:
            total += mass
    return total


def conditional_ctf(scm: Scm, query: CtfQuery) -> Fraction:
    """Joint probability of the events normalized by the conditioning mass."""
    if not query.conditioning:
        return counterfactual_joint(scm, query)
    denom = counterfactual_joint(scm, CtfQuery((), query.conditioning))
    if denom == 0:
        raise ZeroConditioningError(
            f"conditioning {dict(query.conditioning)} has probability 0"
        )
    return counterfactual_joint(scm, query) / denom


def feature_ctf(
    scm: Scm,
    care_set: Sequence[str],
    intervention: Mapping[str, int],
    w: Mapping[str, int],
    w_prime: Mapping[str, int],
    normalize: bool = False,
) -> Fraction:
    """Probability that the cared features read w factually and w' after
    the intervention.

    The care set must cover both assignments; variables in it are label
    level, so the push-forward through any invertible labeling reduces to
    this plain counterfactual joint.  With ``normalize`` the result is
    divided by P(W=w).
    """
    care = tuple(care_set)
    if set(w) != set(care) or set(w_prime) != set(care):
        raise EngineError("w and w' must assign exactly the care set")
    events = [(v, w_prime[v], intervention) for v in care]
    query = CtfQuery.build(events, {v: w[v] for v in care})
    if normalize:
        return conditional_ctf(scm, query)
    return counterfactual_joint(scm, query)


@dataclass(frozen=True)
class QueryComparison:
    query: CtfQuery
    value_first: Fraction
    value_second: Fraction


@dataclass(frozen=True)
class ComparisonReport:
    observational_equal: bool
    diagrams_equal: bool
    queries: tuple[QueryComparison, ...]

    def to_json_dict(self) -> dict:
        return {
            "observational_equal": self.observational_equal,
            "diagrams_equal": self.diagrams_equal,
            "queries": [
                {
                    "query": qc.query.pretty(),
                    "first": _frac_str(qc.value_first),
                    "second": _frac_str(qc.value_second),
                    "equal": qc.value_first == qc.value_second,
                }
                for qc in self.queries
            ],
        }


def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def compare_models(
    first: Scm, second: Scm, queries: Sequence[CtfQuery] = ()
) -> ComparisonReport:
    """Compare two models sharing an endogenous signature.

    Reports exact equality of observational distributions, equality of the
    induced diagrams, and each query's value under both models.  A pair
    that is observationally equal but disagrees on a query is an explicit
    witness that the query is not determined by the observational layer.
    """
    sig1 = [(v.name, v.domain) for v in first.endogenous]
    sig2 = [(v.name, v.domain) for v in second.endogenous]
    if sig1 != sig2:
        raise EngineError("endogenous signatures differ")
    obs_equal = observational(first).table == observational(second).table
    d1, d2 = induce_diagram(first), induce_diagram(second)
    diagrams_equal = (
        d1.nodes == d2.nodes
        and d1.directed == d2.directed
        and d1.bidirected == d2.bidirected
    )
    rows = []
    for q in queries:
        rows.append(
            QueryComparison(q, conditional_ctf(first, q), conditional_ctf(second, q))
        )
    return ComparisonReport(obs_equal, diagrams_equal, tuple(rows))
