"""Shared fixtures and the seeded random-model generator used by the
property suites."""

from __future__ import annotations

import itertools
from fractions import Fraction

import pytest

from ctfscm.core import (
    BINARY,
    EndogenousVar,
    ExogenousFactor,
    Ref,
    Scm,
    TableExpr,
    Xor,
    solve,
)
from ctfscm.engine import CtfQuery, observational
from ctfscm.datasets import get_builtin
from ctfscm.rng import SeedStream

_PROBS = [
    Fraction(1, 5),
    Fraction(1, 4),
    Fraction(1, 3),
    Fraction(2, 5),
    Fraction(1, 2),
    Fraction(3, 5),
    Fraction(3, 4),
    Fraction(4, 5),
]


def random_scm(stream: SeedStream, max_vars: int = 4, max_shared: int = 3) -> Scm:
    """Binary-variable model with random tables, noisy enough that every
    assignment has positive mass (each mechanism xors in private noise
    with probability strictly inside (0, 1))."""
    n = 2 + stream.randrange(max_vars - 1)
    names = [f"V{i + 1}" for i in range(n)]
    exo: list[ExogenousFactor] = []
    shared_of: dict[int, list[str]] = {i: [] for i in range(n)}
    for k in range(stream.randrange(max_shared + 1)):
        i = stream.randrange(n - 1)
        j = i + 1 + stream.randrange(n - 1 - i)
        wname = f"W{k + 1}"
        exo.append(
            ExogenousFactor.bernoulli(wname, _PROBS[stream.randrange(len(_PROBS))])
        )
        shared_of[i].append(wname)
        shared_of[j].append(wname)
    variables = []
    for i, name in enumerate(names):
        pool = list(range(i))
        parents = []
        for _ in range(2):
            if pool and stream.randrange(2) == 0:
                parents.append(names[pool.pop(stream.randrange(len(pool)))])
        uname = f"U{i + 1}"
        exo.append(
            ExogenousFactor.bernoulli(uname, _PROBS[stream.randrange(len(_PROBS))])
        )
        inputs = tuple(sorted(parents) + shared_of[i])
        if inputs:
            mapping = {
                combo: stream.randrange(2)
                for combo in itertools.product((0, 1), repeat=len(inputs))
            }
            mech = Xor(TableExpr(inputs, mapping), Ref(uname))
        else:
            mech = Ref(uname)
        variables.append(EndogenousVar(name, BINARY, mech))
    return Scm("random_model", tuple(exo), tuple(variables))


def random_query(scm: Scm, stream: SeedStream) -> CtfQuery:
    names = scm.endo_names
    atom = {
        f.name: f.support.values[stream.randrange(len(f.support))]
        for f in scm.exogenous
    }
    vals = solve(scm, atom)
    conditioning = {v: vals[v] for v in names if stream.randrange(2) == 0}
    k = 1 + stream.randrange(min(2, len(names)))
    targets = []
    for _ in range(k):
        t = stream.choice(names)
        if t not in targets:
            targets.append(t)
    x = {t: stream.randrange(2) for t in sorted(targets)}
    events = []
    used = set()
    for _ in range(1 + stream.randrange(2)):
        v = stream.choice(names)
        if v in used:
            continue
        used.add(v)
        events.append((v, stream.randrange(2), x))
    return CtfQuery.build(events, conditioning)


@pytest.fixture(scope="session")
def face_mstar():
    return get_builtin("face_mstar")


@pytest.fixture(scope="session")
def face_obs(face_mstar):
    return observational(face_mstar.scm)


@pytest.fixture(scope="session")
def backdoor():
    return get_builtin("backdoor")


@pytest.fixture(scope="session")
def backdoor_obs(backdoor):
    return observational(backdoor.scm)


@pytest.fixture(scope="session")
def frontdoor():
    return get_builtin("frontdoor")


@pytest.fixture(scope="session")
def frontdoor_obs(frontdoor):
    return observational(frontdoor.scm)


def domains_of(scm: Scm):
    return {v.name: v.domain for v in scm.endogenous}
