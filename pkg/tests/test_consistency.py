from fractions import Fraction

import pytest

from ctfscm.consistency import (
    ConsistencyError,
    SampleRecord,
    check_ctf_consistency,
    empirical_distribution,
    markovian_fit,
    proxy_conditional,
    proxy_markovian,
    proxy_preserve,
    read_log,
    write_log,
)
from ctfscm.datasets import get_builtin
from ctfscm.engine import observational

from conftest import domains_of

F = Fraction
N = 6000
# the 40-cell digit models need more samples for the TV tolerance
N_BIG = 20000


def test_empirical_point_mass():
    rows = [{"A": 1, "B": 0}] * 4
    d = empirical_distribution(rows, ("A", "B"))
    assert dict(d.table) == {(1, 0): F(1)}


def test_empirical_rejects_ragged_and_empty():
    with pytest.raises(ConsistencyError):
        empirical_distribution([{"A": 1}, {"B": 0}], ("A", "B"))
    with pytest.raises(ConsistencyError):
        empirical_distribution([], ("A",))


def test_empirical_face_concentrates(face_mstar, face_obs):
    from ctfscm.datasets import sample_labels

    rows = sample_labels(face_mstar, 20000, 123)
    emp = empirical_distribution(rows, face_obs.variables)
    assert emp.tv_distance(face_obs) < F(1, 100)


def test_sample_record_do_enforced():
    with pytest.raises(ConsistencyError):
        SampleRecord({"A": 0}, {"A": 0}, {"A": 1})


def test_log_round_trip(tmp_path, face_obs):
    log = proxy_preserve(face_obs, {"Y": 0}, 50, 1)
    path = tmp_path / "log.jsonl"
    write_log(log, str(path))
    again = read_log(str(path))
    assert again == log
    # byte-identical on rewrite
    data1 = path.read_bytes()
    write_log(again, str(path))
    assert path.read_bytes() == data1


def test_proxy_determinism(face_obs):
    a = proxy_conditional(face_obs, {"Y": 0}, 100, 7)
    b = proxy_conditional(face_obs, {"Y": 0}, 100, 7)
    assert a == b
    c = proxy_conditional(face_obs, {"Y": 0}, 100, 8)
    assert c != a


def test_proxy_preserve_copies(face_obs):
    log = proxy_preserve(face_obs, {"Y": 0}, 200, 3)
    for r in log:
        assert r.counterfactual["Y"] == 0
        assert r.counterfactual["F"] == r.factual["F"]
        assert r.counterfactual["H"] == r.factual["H"]


def test_proxy_preserve_identity_when_matching(face_obs):
    log = proxy_preserve(face_obs, {}, 50, 3)
    for r in log:
        assert r.counterfactual == r.factual


def test_proxy_conditional_tracks_conditional_marginal(face_obs):
    # fraction with F'=0 among factual (F=0, Y=1) approaches P(F=0 | Y=0) = 3/5
    log = proxy_conditional(face_obs, {"Y": 0}, N, 11)
    sel = [r for r in log if r.factual["F"] == 0 and r.factual["Y"] == 1]
    frac = F(sum(1 for r in sel if r.counterfactual["F"] == 0), len(sel))
    assert abs(frac - F(3, 5)) < F(1, 20)


def test_proxy_conditional_deterministic_obs():
    from ctfscm.engine import Distribution

    obs = Distribution(("A", "B"), {(1, 0): F(1)})
    log = proxy_conditional(obs, {"A": 1}, 20, 0)
    for r in log:
        assert r.factual == {"A": 1, "B": 0}
        assert r.counterfactual == {"A": 1, "B": 0}


def test_markovian_fit_face_tv(face_mstar, face_obs):
    fit = markovian_fit(face_obs, face_mstar.diagram)
    assert fit.tv_to_reference == F(12, 125)
    assert not fit.filled_contexts


def test_markovian_fit_exact_when_markovian():
    # ground truth without confounding: the refit reproduces it exactly
    scm = get_builtin("face_mstar").scm
    from ctfscm.core import CausalDiagram

    obs = observational(scm)
    diagram = get_builtin("face_mstar").diagram
    fit = markovian_fit(obs, diagram)
    markov_obs = observational(fit.scm, obs.variables)
    refit = markovian_fit(markov_obs, diagram)
    assert refit.tv_to_reference == 0
    log, fit2 = proxy_markovian(markov_obs, diagram, {"Y": 0}, 4000, 5)
    report = check_ctf_consistency(
        markov_obs, log, diagram, ("F", "Y"),
    )
    assert report.verdict == "pass"


def test_markov_proxy_preserves_gender_but_fails(face_mstar, face_obs):
    log, fit = proxy_markovian(face_obs, face_mstar.diagram, {"Y": 0}, N, 2)
    assert all(r.factual["F"] == r.counterfactual["F"] for r in log)
    report = check_ctf_consistency(
        face_obs, log, face_mstar.diagram, ("F", "Y"),
        domains=domains_of(face_mstar.scm),
    )
    assert report.verdict == "fail"
    assert not report.obs_fit
    assert abs(report.observational_tv - F(12, 125)) < F(1, 50)


def test_conditional_proxy_fails_gender_check(face_mstar, face_obs):
    log = proxy_conditional(face_obs, {"Y": 0}, N, 1)
    report = check_ctf_consistency(
        face_obs, log, face_mstar.diagram, ("F", "Y"),
        domains=domains_of(face_mstar.scm),
    )
    assert report.verdict == "fail"
    assert report.obs_fit  # factual marginal is fine; bounds are violated
    flip = next(
        c for c in report.cells
        if c.w == {"F": 0, "Y": 1} and c.w_prime == {"F": 0, "Y": 0}
    )
    assert (flip.lower, flip.upper) == (F(1), F(1))
    assert not flip.in_bound


def test_preserve_passes_gender_check(face_mstar, face_obs):
    log = proxy_preserve(face_obs, {"Y": 0}, N, 4)
    report = check_ctf_consistency(
        face_obs, log, face_mstar.diagram, ("F", "Y"),
        domains=domains_of(face_mstar.scm),
    )
    assert report.verdict == "pass"


def test_preserve_fails_backdoor_task1(backdoor, backdoor_obs):
    log = proxy_preserve(backdoor_obs, {"D": 6}, N_BIG, 3)
    report = check_ctf_consistency(
        backdoor_obs, log, backdoor.diagram, ("D", "C", "B"),
        domains=domains_of(backdoor.scm),
    )
    assert report.verdict == "fail"
    cell = next(
        c for c in report.cells
        if c.w == {"D": 3, "C": 1, "B": 1}
        and c.w_prime == {"D": 6, "C": 1, "B": 1}
    )
    assert cell.estimate == 1
    assert cell.upper == F(14, 41)
    assert not cell.in_bound


def test_preserve_passes_backdoor_task2(backdoor, backdoor_obs):
    log = proxy_preserve(backdoor_obs, {"B": 0}, N_BIG, 4)
    report = check_ctf_consistency(
        backdoor_obs, log, backdoor.diagram, ("D", "C", "B"),
        domains=domains_of(backdoor.scm),
    )
    assert report.verdict == "pass"
    assert all(c.lower == 1 and c.upper == 1 for c in report.cells)


def test_care_set_equal_to_intervened_always_passes(face_mstar, face_obs):
    # any proxy whose factual marginal matches passes with W = {Y}
    for maker, seed in ((proxy_conditional, 5), (proxy_preserve, 6)):
        log = maker(face_obs, {"Y": 0}, N_BIG, seed)
        report = check_ctf_consistency(
            face_obs, log, face_mstar.diagram, ("Y",),
            domains=domains_of(face_mstar.scm),
        )
        assert report.verdict == "pass", maker.__name__


def test_verdict_monotone_in_tolerances(face_mstar, face_obs):
    log = proxy_markovian(face_obs, face_mstar.diagram, {"Y": 0}, 2000, 9)[0]
    strict = check_ctf_consistency(
        face_obs, log, face_mstar.diagram, ("F", "Y"),
        eps_obs=F(1, 50), delta=F(1, 100),
        domains=domains_of(face_mstar.scm),
    )
    loose = check_ctf_consistency(
        face_obs, log, face_mstar.diagram, ("F", "Y"),
        eps_obs=F(1, 5), delta=F(1, 10),
        domains=domains_of(face_mstar.scm),
    )
    order = {"pass": 0, "conditional": 1, "fail": 2}
    assert order[loose.verdict] <= order[strict.verdict]
    assert strict.verdict == "fail" and loose.verdict == "pass"


def test_mixed_interventions_rejected(face_obs):
    log = proxy_preserve(face_obs, {"Y": 0}, 5, 1) + proxy_preserve(
        face_obs, {"Y": 1}, 5, 1
    )
    with pytest.raises(ConsistencyError):
        check_ctf_consistency(
            face_obs, log, get_builtin("face_mstar").diagram, ("F", "Y")
        )


def test_report_json_schema(face_mstar, face_obs):
    log = proxy_preserve(face_obs, {"Y": 0}, 500, 4)
    report = check_ctf_consistency(
        face_obs, log, face_mstar.diagram, ("F", "Y"),
        domains=domains_of(face_mstar.scm),
    )
    d = report.to_json_dict()
    assert set(d) == {
        "verdict", "obs_fit", "observational_tv", "eps_obs", "delta",
        "intervention", "care_set", "cells", "skipped",
    }
    assert d["intervention"] == {"Y": 0}
    assert report.exit_code in (0, 1, 2)


def test_uncertified_bounds_yield_conditional_verdict():
    # three coupled single-variable components force the heuristic bound
    # path, and uncertified cells must cap the verdict at "conditional"
    from ctfscm.core import BINARY, EndogenousVar, ExogenousFactor, Ref, Scm, Xor
    from ctfscm.core import induce_diagram

    exo = (
        ExogenousFactor.bernoulli("U_X", F(1, 2)),
        ExogenousFactor.bernoulli("U_A", F(1, 3)),
        ExogenousFactor.bernoulli("U_B", F(1, 4)),
        ExogenousFactor.bernoulli("U_C", F(2, 5)),
    )
    endos = (
        EndogenousVar("X", BINARY, Ref("U_X")),
        EndogenousVar("A", BINARY, Xor(Ref("X"), Ref("U_A"))),
        EndogenousVar("B", BINARY, Xor(Ref("X"), Ref("U_B"))),
        EndogenousVar("C", BINARY, Xor(Ref("X"), Ref("U_C"))),
    )
    scm = Scm("chain", exo, endos)
    obs = observational(scm)
    diagram = induce_diagram(scm)
    from ctfscm.datasets import sample_labels

    rows = sample_labels(scm, 3000, 7)
    records = []
    for i, row in enumerate(rows):
        cf = dict(row)
        cf["X"] = 1
        cf["A"] = 1 - row["A"] if row["X"] == 0 else row["A"]
        cf["B"] = 1 - row["B"] if row["X"] == 0 else row["B"]
        cf["C"] = 1 - row["C"] if row["X"] == 0 else row["C"]
        records.append(SampleRecord(row, cf, {"X": 1}, i))
    report = check_ctf_consistency(
        obs, records, diagram, ("A", "B", "C"), eps_obs=F(1, 10),
    )
    assert any(not c.certified for c in report.cells)
    assert report.verdict == "conditional"


def test_preserve_passes_on_nondescendant_care_set(face_mstar, face_obs):
    # W={F} contains only non-descendants of Y, so copying always passes
    log = proxy_preserve(face_obs, {"Y": 0}, N_BIG, 12)
    report = check_ctf_consistency(
        face_obs, log, face_mstar.diagram, ("F",),
        domains=domains_of(face_mstar.scm),
    )
    assert report.verdict == "pass"
    assert all((c.lower, c.upper) in {(F(1), F(1)), (F(0), F(0))}
               for c in report.cells)


def test_proxy_conditional_independent_target_keeps_marginal():
    # when the edited variable is independent of the rest, conditioning on
    # it changes nothing: the counterfactual marginal matches the factual
    from ctfscm.engine import Distribution

    obs = Distribution(
        ("X", "Z"),
        {
            (0, 0): F(3, 10), (0, 1): F(1, 5),
            (1, 0): F(3, 10), (1, 1): F(1, 5),
        },
    )
    log = proxy_conditional(obs, {"X": 1}, 8000, 21)
    fact = empirical_distribution([r.factual for r in log], ("Z",))
    ctf = empirical_distribution([r.counterfactual for r in log], ("Z",))
    assert ctf.tv_distance(fact) < F(1, 50)
    assert abs(ctf.prob({"Z": 1}) - F(2, 5)) < F(1, 50)
