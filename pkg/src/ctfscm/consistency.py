"""Consistency verdicts for counterfactual editing proxies.

A proxy editor is judged from a log of (factual, counterfactual) label
pairs sharing one intervention.  Two conditions are checked against a
reference observational distribution and a diagram: the factual marginal
must match the reference up to a total-variation tolerance, and every
observed counterfactual cell's empirical frequency must lie inside the
optimal bound for that cell (with slack).  Uncertified bounds can never
produce a silent pass; they cap the verdict at "conditional".

Three label-level proxy simulators mirror common editor families: a
purely correlational resampler, a copy-everything editor, and a
Markovian refit that drops confounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .bounds import BoundResult, optimal_bounds
from .canonical import BoundsInputError
from .core import (
    CausalDiagram,
    EndogenousVar,
    ExogenousFactor,
    FiniteDomain,
    Scm,
    TableExpr,
    mutilate,
    solver,
)
from .engine import CtfQuery, Distribution, ZeroConditioningError
from .rng import SeedStream


class ConsistencyError(Exception):
    pass


@dataclass(frozen=True)
class SampleRecord:
    """One logged edit: factual labels, counterfactual labels, intervention."""

    factual: Mapping[str, int]
    counterfactual: Mapping[str, int]
    do: Mapping[str, int]
    seed: int = 0

    def __post_init__(self):
        if set(self.factual) != set(self.counterfactual):
            raise ConsistencyError("factual/counterfactual variables differ")
        for k, v in self.do.items():
            if self.counterfactual.get(k) != v:
                raise ConsistencyError(
                    f"counterfactual does not honor do({k}={v})"
                )


def write_log(records: Sequence[SampleRecord], path: str) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "factual": dict(sorted(r.factual.items())),
                        "counterfactual": dict(sorted(r.counterfactual.items())),
                        "do": dict(sorted(r.do.items())),
                        "seed": r.seed,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_log(path: str) -> list[SampleRecord]:
    records = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(
                    SampleRecord(
                        {k: int(v) for k, v in obj["factual"].items()},
                        {k: int(v) for k, v in obj["counterfactual"].items()},
                        {k: int(v) for k, v in obj["do"].items()},
                        int(obj.get("seed", 0)),
                    )
                )
            except (KeyError, ValueError, ConsistencyError) as e:
                raise ConsistencyError(f"{path}:{ln}: bad record: {e}") from None
    if not records:
        raise ConsistencyError(f"{path}: empty log")
    return records


def empirical_distribution(
    rows: Iterable[Mapping[str, int]], variables: Sequence[str]
) -> Distribution:
    """Relative-frequency table with exact denominator-n rationals."""
    variables = tuple(variables)
    counts: dict[tuple[int, ...], int] = {}
    n = 0
    for row in rows:
        missing = [v for v in variables if v not in row]
        if missing:
            raise ConsistencyError(f"record lacks variables {missing}")
        key = tuple(row[v] for v in variables)
        counts[key] = counts.get(key, 0) + 1
        n += 1
    if n == 0:
        raise ConsistencyError("no records")
    return Distribution(
        variables, {k: Fraction(c, n) for k, c in counts.items()}
    )


# ---------------------------------------------------------------------------
# Proxy simulators
# ---------------------------------------------------------------------------


class _DistSampler:
    def __init__(self, dist: Distribution):
        self.variables = dist.variables
        denom = 1
        for m in dist.table.values():
            denom = denom * m.denominator // _gcd(denom, m.denominator)
        self.denom = denom
        self.cuts = []
        acc = 0
        for key, mass in dist.items():
            if mass == 0:
                continue
            acc += int(mass * denom)
            self.cuts.append((acc, key))

    def draw(self, stream: SeedStream) -> dict[str, int]:
        k = stream.randrange(self.denom)
        for cut, key in self.cuts:
            if k < cut:
                return dict(zip(self.variables, key))
        return dict(zip(self.variables, self.cuts[-1][1]))


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def proxy_conditional(
    obs: Distribution, intervention: Mapping[str, int], n: int, seed: int
) -> list[SampleRecord]:
    """Correlational editor: resamples non-intervened variables from the
    observational distribution conditioned on the edited values."""
    if obs.prob(dict(intervention)) == 0:
        raise ZeroConditioningError(
            f"observational mass of {dict(intervention)} is 0"
        )
    factual = _DistSampler(obs)
    cond = _DistSampler(obs.conditional(dict(intervention)))
    root = SeedStream("proxy-conditional", seed)
    records = []
    for i in range(n):
        stream = root.child(i)
        f = factual.draw(stream)
        cf = cond.draw(stream)
        cf.update(intervention)
        records.append(SampleRecord(f, cf, dict(intervention), i))
    return records


def proxy_preserve(
    obs: Distribution, intervention: Mapping[str, int], n: int, seed: int
) -> list[SampleRecord]:
    """Copy-everything editor: counterfactual equals factual except on the
    intervened variables."""
    factual = _DistSampler(obs)
    root = SeedStream("proxy-preserve", seed)
    records = []
    for i in range(n):
        f = factual.draw(root.child(i))
        cf = dict(f)
        cf.update(intervention)
        records.append(SampleRecord(f, cf, dict(intervention), i))
    return records


@dataclass(frozen=True)
class MarkovFit:
    scm: Scm
    tv_to_reference: Fraction
    filled_contexts: tuple[tuple[str, tuple[int, ...]], ...]


def markovian_fit(obs: Distribution, diagram: CausalDiagram) -> MarkovFit:
    """Best-effort refit that drops bidirected edges.

    Mechanisms are the observed conditionals given directed parents,
    realized by inverse-cdf over one independent uniform factor per
    variable; zero-probability parent contexts fall back to a uniform
    choice and are reported.
    """
    from .engine import observational  # local import to avoid a cycle

    filled = []
    factors = []
    endos = []
    for v in diagram.topo_order():
        parents = diagram.parents(v)
        values = sorted({key[obs.variables.index(v)] for key in obs.table})
        domain = FiniteDomain(tuple(values))
        parent_domains = []
        for p in parents:
            pv = sorted({key[obs.variables.index(p)] for key in obs.table})
            parent_domains.append(tuple(pv))
        import itertools

        dists = {}
        grain = 1
        for cfg in itertools.product(*parent_domains):
            given = dict(zip(parents, cfg))
            mass = obs.prob(given)
            if mass == 0:
                dist = [(x, Fraction(1, len(values))) for x in values]
                filled.append((v, cfg))
            else:
                dist = [
                    (x, obs.prob({v: x, **given}) / mass) for x in values
                ]
            dists[cfg] = dist
            for _, m in dist:
                grain = grain * m.denominator // _gcd(grain, m.denominator)
        uname = f"U_{v}"
        factors.append(ExogenousFactor.uniform(uname, 0, max(grain - 1, 0)))
        mapping = {}
        for cfg, dist in dists.items():
            for u in range(grain):
                acc = 0
                out = dist[-1][0]
                for x, m in dist:
                    acc += int(m * grain)
                    if u < acc:
                        out = x
                        break
                mapping[cfg + (u,)] = out
        endos.append(
            EndogenousVar(v, domain, TableExpr(tuple(parents) + (uname,), mapping))
        )
    order = {v: i for i, v in enumerate(diagram.nodes)}
    endos.sort(key=lambda e: order[e.name])
    scm = Scm("markovian_fit", tuple(factors), tuple(endos))
    tv = observational(scm, obs.variables).tv_distance(obs)
    return MarkovFit(scm, tv, tuple(filled))


def proxy_markovian(
    obs: Distribution,
    diagram: CausalDiagram,
    intervention: Mapping[str, int],
    n: int,
    seed: int,
) -> tuple[list[SampleRecord], MarkovFit]:
    """Markovian editor: counterfactuals by abduction, action, prediction
    through the refit model (abduction is exact here because the sampler
    knows the latent draw)."""
    fit = markovian_fit(obs, diagram)
    from .datasets import sample_exogenous

    run_f = solver(fit.scm)
    run_cf = solver(mutilate(fit.scm, dict(intervention)))
    root = SeedStream("proxy-markovian", seed)
    records = []
    for i in range(n):
        u = sample_exogenous(fit.scm, root.child(i))
        f = run_f(u)
        cf = run_cf(u)
        records.append(SampleRecord(f, cf, dict(intervention), i))
    return records, fit


# ---------------------------------------------------------------------------
# The checker
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellCheck:
    w: Mapping[str, int]
    w_prime: Mapping[str, int]
    count: int
    factual_count: int
    estimate: Fraction
    lower: Fraction
    upper: Fraction
    certified: bool
    in_bound: bool

    def to_json_dict(self) -> dict:
        return {
            "w": dict(sorted(self.w.items())),
            "w_prime": dict(sorted(self.w_prime.items())),
            "count": self.count,
            "factual_count": self.factual_count,
            "estimate": _fstr(self.estimate),
            "lower": _fstr(self.lower),
            "upper": _fstr(self.upper),
            "certified": self.certified,
            "in_bound": self.in_bound,
        }


@dataclass(frozen=True)
class ConsistencyReport:
    verdict: str  # pass | fail | conditional
    obs_fit: bool
    observational_tv: Fraction
    eps_obs: Fraction
    delta: Fraction
    intervention: Mapping[str, int]
    care_set: tuple[str, ...]
    cells: tuple[CellCheck, ...]
    skipped: tuple[str, ...]

    @property
    def exit_code(self) -> int:
        return {"pass": 0, "fail": 1, "conditional": 2}[self.verdict]

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "obs_fit": self.obs_fit,
            "observational_tv": _fstr(self.observational_tv),
            "eps_obs": _fstr(self.eps_obs),
            "delta": _fstr(self.delta),
            "intervention": dict(sorted(self.intervention.items())),
            "care_set": list(self.care_set),
            "cells": [c.to_json_dict() for c in self.cells],
            "skipped": list(self.skipped),
        }


def _fstr(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def check_ctf_consistency(
    obs_ref: Distribution,
    records: Sequence[SampleRecord],
    diagram: CausalDiagram,
    care_set: Sequence[str],
    intervention: Mapping[str, int] | None = None,
    eps_obs: Fraction = Fraction(1, 50),
    delta: Fraction = Fraction(1, 100),
    domains=None,
) -> ConsistencyReport:
    """Verdict for a proxy log against a reference distribution and diagram.

    Condition (1): total variation between the log's factual marginal and
    the reference is at most ``eps_obs``.  Condition (2): for every
    observed (w, w') cell over the care set, the empirical conditional
    frequency lies within the optimal bound widened by ``delta``.  The
    verdict is "pass" only when both hold with certified bounds
    everywhere; uncertified or unverifiable cells yield "conditional".
    """
    if not records:
        raise ConsistencyError("empty proxy log")
    care = tuple(care_set)
    for v in care:
        if v not in obs_ref.variables:
            raise ConsistencyError(f"care variable {v!r} not in reference")
    missing_care = [v for v in care if v not in records[0].factual]
    if missing_care:
        raise ConsistencyError(f"records lack care variables {missing_care}")
    x_prime = dict(records[0].do)
    for r in records:
        if dict(r.do) != x_prime:
            raise ConsistencyError("log mixes different interventions")
    if intervention is not None and dict(intervention) != x_prime:
        raise ConsistencyError(
            f"log intervention {x_prime} differs from requested "
            f"{dict(intervention)}"
        )

    empirical = empirical_distribution(
        [r.factual for r in records], obs_ref.variables
    )
    tv = empirical.tv_distance(obs_ref)
    obs_fit = tv <= eps_obs

    factual_counts: dict[tuple[int, ...], int] = {}
    pair_counts: dict[tuple[tuple[int, ...], tuple[int, ...]], int] = {}
    for r in records:
        w = tuple(r.factual[v] for v in care)
        wp = tuple(r.counterfactual[v] for v in care)
        factual_counts[w] = factual_counts.get(w, 0) + 1
        pair_counts[(w, wp)] = pair_counts.get((w, wp), 0) + 1

    cells: list[CellCheck] = []
    skipped: list[str] = []
    any_uncertified = False
    any_fail = False
    bound_cache: dict[tuple, BoundResult] = {}
    for (w, wp), count in sorted(pair_counts.items()):
        w_map = dict(zip(care, w))
        wp_map = dict(zip(care, wp))
        key = (w, wp)
        try:
            if key not in bound_cache:
                query = CtfQuery.build(
                    [(v, wp_map[v], x_prime) for v in care], w_map
                )
                bound_cache[key] = optimal_bounds(
                    obs_ref, diagram, query, domains=domains
                )
            bound = bound_cache[key]
        except (ZeroConditioningError, BoundsInputError) as e:
            skipped.append(f"w={w_map} w'={wp_map}: {e}")
            continue
        est = Fraction(count, factual_counts[w])
        in_bound = bound.lower - delta <= est <= bound.upper + delta
        if not bound.certified:
            any_uncertified = True
        elif not in_bound:
            any_fail = True
        cells.append(
            CellCheck(
                w_map, wp_map, count, factual_counts[w], est,
                bound.lower, bound.upper, bound.certified, in_bound,
            )
        )

    if not obs_fit or any_fail:
        verdict = "fail"
    elif any_uncertified or skipped:
        verdict = "conditional"
    else:
        verdict = "pass"
    return ConsistencyReport(
        verdict, obs_fit, tv, eps_obs, delta, x_prime, care,
        tuple(cells), tuple(skipped),
    )
