from fractions import Fraction

import pytest

from ctfscm.core import (
    BINARY,
    And,
    Const,
    CyclicModelError,
    EndogenousVar,
    ExogenousFactor,
    FiniteDomain,
    Not,
    Ref,
    Scm,
    ScmError,
    Xor,
    induce_diagram,
    iter_atoms,
    mutilate,
    solve,
    validate,
)
from ctfscm.datasets import get_builtin
from ctfscm.rng import SeedStream

from conftest import random_scm


def test_solve_face_hand_values(face_mstar):
    # F = u_f xor u_y, Y = u_y, H = (not Y and u_h1) xor (Y and u_h2)
    u = {"U_F": 1, "U_Y": 1, "U_H1": 0, "U_H2": 0}
    assert solve(face_mstar.scm, u) == {"F": 0, "Y": 1, "H": 0}
    u = {"U_F": 1, "U_Y": 1, "U_H1": 1, "U_H2": 0}
    assert solve(face_mstar.scm, u) == {"F": 0, "Y": 1, "H": 0}
    u = {"U_F": 0, "U_Y": 0, "U_H1": 1, "U_H2": 0}
    assert solve(face_mstar.scm, u) == {"F": 0, "Y": 0, "H": 1}


def test_solve_constant_model():
    scm = Scm(
        "const",
        (ExogenousFactor.bernoulli("U", Fraction(1, 2)),),
        (EndogenousVar("V", FiniteDomain((3,)), Const(3)),),
    )
    for u, _ in iter_atoms(scm):
        assert solve(scm, u) == {"V": 3}


def test_effectiveness_and_composition_exhaustive(face_mstar):
    scm = face_mstar.scm
    sub = mutilate(scm, {"Y": 0})
    for u, _ in iter_atoms(scm):
        assert solve(sub, u)["Y"] == 0
        # composition: re-pinning observed values changes nothing
        vals = solve(scm, u)
        pinned = mutilate(scm, {"F": vals["F"]})
        assert solve(pinned, u) == vals


def test_mutilate_empty_is_identity(face_mstar):
    assert mutilate(face_mstar.scm, {}) is face_mstar.scm


def test_mutilate_out_of_domain(face_mstar):
    with pytest.raises(ScmError):
        mutilate(face_mstar.scm, {"Y": 7})
    with pytest.raises(ScmError):
        mutilate(face_mstar.scm, {"U_Y": 1})


def test_mutilate_backdoor_keeps_latent_color_path(backdoor):
    # After do(D=6) the color mechanism still reads the latent U_D, so C
    # keeps its factual value; B reads the constant 6.
    sub = mutilate(backdoor.scm, {"D": 6})
    for u, _ in iter_atoms(backdoor.scm):
        factual = solve(backdoor.scm, u)
        post = solve(sub, u)
        assert post["D"] == 6
        assert post["C"] == factual["C"]
        delta6 = 1  # 6 >= 5
        expected_b = (
            (delta6 ^ u["U_1"]) | (post["C"] ^ u["U_2"])
        ) & u["U_3"]
        assert post["B"] == expected_b


def test_induced_diagram_face(face_mstar):
    d = face_mstar.diagram
    assert set(d.directed) == {("Y", "H")}
    assert set(d.bidirected) == {("F", "Y")}


def test_induced_diagram_single_variable():
    scm = Scm(
        "one",
        (ExogenousFactor.bernoulli("U", Fraction(1, 3)),),
        (EndogenousVar("V", BINARY, Ref("U")),),
    )
    d = induce_diagram(scm)
    assert not d.directed and not d.bidirected


def test_induced_diagram_backdoor_frontdoor(backdoor, frontdoor):
    d = backdoor.diagram
    assert set(d.directed) == {("D", "B"), ("C", "B")}
    assert set(d.bidirected) == {("D", "C")}
    d = frontdoor.diagram
    assert set(d.directed) == {("D", "C"), ("C", "B")}
    assert set(d.bidirected) == {("D", "B")}


def test_induced_diagram_mprime():
    d = get_builtin("face_mprime").diagram
    assert not d.directed
    assert set(d.bidirected) == {("F", "Y"), ("F", "H"), ("Y", "H")}


def test_validate_all_builtins():
    from ctfscm.datasets import builtin_names

    for name in builtin_names():
        assert validate(get_builtin(name).scm).ok, name


def test_validate_pmf_violation():
    bad = Scm(
        "bad",
        (
            ExogenousFactor(
                "U", BINARY, {0: Fraction(1, 2), 1: Fraction(1, 3)}
            ),
        ),
        (EndogenousVar("V", BINARY, Ref("U")),),
    )
    report = validate(bad)
    assert not report.ok
    assert any(i.kind == "pmf" and i.subject == "U" for i in report.issues)


def test_validate_cycle():
    bad = Scm(
        "loop",
        (ExogenousFactor.bernoulli("U", Fraction(1, 2)),),
        (
            EndogenousVar("V1", BINARY, Ref("V2")),
            EndogenousVar("V2", BINARY, Ref("V1")),
        ),
    )
    report = validate(bad)
    assert not report.ok
    assert any(i.kind == "cycle" for i in report.issues)
    with pytest.raises(CyclicModelError):
        bad.topo_order()


def test_validate_domain_closure():
    bad = Scm(
        "closure",
        (ExogenousFactor.uniform("U", 0, 3),),
        (EndogenousVar("V", BINARY, Ref("U")),),  # U ranges over 0..3
    )
    report = validate(bad)
    assert not report.ok
    assert any(i.kind == "domain" for i in report.issues)


def test_validate_boolean_operands():
    bad = Scm(
        "boolops",
        (ExogenousFactor.uniform("U", 0, 2),),
        (EndogenousVar("V", FiniteDomain((0, 1, 2, 3)), Not(Ref("U"))),),
    )
    report = validate(bad)
    assert not report.ok
    assert any(i.kind == "boolean" for i in report.issues)


def test_validate_unresolved_reference():
    bad = Scm(
        "unresolved",
        (ExogenousFactor.bernoulli("U", Fraction(1, 2)),),
        (EndogenousVar("V", BINARY, Xor(Ref("U"), Ref("U_missing"))),),
    )
    report = validate(bad)
    assert not report.ok
    assert any(i.kind == "unresolved" for i in report.issues)


def test_domain_constructor_rules():
    with pytest.raises(ScmError):
        FiniteDomain(())
    with pytest.raises(ScmError):
        FiniteDomain((1, 1))
    with pytest.raises(ScmError):
        FiniteDomain((2, 1))


def test_effectiveness_on_random_models():
    stream = SeedStream("core-effectiveness")
    for k in range(25):
        scm = random_scm(stream.child(k))
        assert validate(scm).ok
        target = scm.endo_names[stream.child(k, "pick").randrange(len(scm.endo_names))]
        for x in (0, 1):
            sub = mutilate(scm, {target: x})
            for u, _ in iter_atoms(scm):
                assert solve(sub, u)[target] == x


def test_composition_on_random_models():
    stream = SeedStream("core-composition")
    for k in range(25):
        scm = random_scm(stream.child(k))
        v = scm.endo_names[0]
        for u, _ in iter_atoms(scm):
            vals = solve(scm, u)
            assert solve(mutilate(scm, {v: vals[v]}), u) == vals


def test_exogenous_canonical_order():
    a = ExogenousFactor.bernoulli("A", Fraction(1, 2))
    b = ExogenousFactor.bernoulli("B", Fraction(1, 3))
    v = EndogenousVar("V", BINARY, Xor(Ref("A"), Ref("B")))
    assert Scm("m", (b, a), (v,)) == Scm("m", (a, b), (v,))
