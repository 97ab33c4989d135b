import os
from fractions import Fraction

import pytest

from ctfscm.core import validate
from ctfscm.datasets import (
    DatasetError,
    NuisanceFactors,
    UnlabelableImageError,
    ImageGrid,
    all_nuisances,
    builtin_names,
    export,
    get_builtin,
    label,
    read_labels_csv,
    render,
    sample_labels,
)
from ctfscm.consistency import empirical_distribution
from ctfscm.engine import observational

F = Fraction

HERE = os.path.dirname(__file__)


def test_all_builtins_validate():
    for name in builtin_names():
        model = get_builtin(name)
        assert validate(model.scm).ok, name


def test_face_family_l1_equalities():
    mstar = observational(get_builtin("face_mstar").scm)
    for other in ("face_mprime", "face_m3"):
        assert observational(get_builtin(other).scm).table == mstar.table
    m1 = observational(get_builtin("face_m1_smile").scm)
    m2 = observational(get_builtin("face_m2_smile").scm)
    assert m1.table == m2.table


def test_unknown_builtin():
    with pytest.raises(DatasetError):
        get_builtin("nope")


def test_sample_labels_deterministic(face_mstar):
    a = sample_labels(face_mstar, 50, 9)
    b = sample_labels(face_mstar, 50, 9)
    assert a == b
    assert sample_labels(face_mstar, 50, 10) != a


def test_sample_labels_single_row_in_domain(backdoor):
    (row,) = sample_labels(backdoor, 1, 0)
    assert row["D"] in range(10)
    assert row["C"] in (0, 1) and row["B"] in (0, 1)


def test_sample_labels_concentrates(face_mstar, face_obs):
    rows = sample_labels(face_mstar, 20000, 2024)
    emp = empirical_distribution(rows, face_obs.variables)
    assert emp.tv_distance(face_obs) < F(3, 200)


def test_backdoor_correlation_direction(backdoor):
    rows = sample_labels(backdoor, 20000, 7)
    big = [r for r in rows if r["D"] >= 5]
    small = [r for r in rows if r["D"] < 5]
    red_big = F(sum(r["C"] for r in big), len(big))
    red_small = F(sum(r["C"] for r in small), len(small))
    assert red_big > red_small  # larger digits are more often red


def test_render_golden_fixture():
    img = render(0, 1, 1, NuisanceFactors(0, 0, 1))
    with open(os.path.join(HERE, "data", "golden_d0_c1_b1.ppm"), "rb") as fh:
        assert img.to_ppm() == fh.read()


def test_render_band_and_ink_structure():
    img = render(3, 0, 1, NuisanceFactors(1, -1, 2))
    # bar band is uniformly blue; ink is green only
    for r in range(3):
        for c in range(28):
            assert img.get(r, c) == (0, 0, 255)
    inks = {
        img.get(r, c)
        for r in range(3, 28)
        for c in range(28)
        if img.get(r, c) != (0, 0, 0)
    }
    assert inks == {(0, 255, 0)}


def test_render_nuisance_changes_pixels_not_labels():
    base = render(5, 1, 0, NuisanceFactors(0, 0, 1))
    moved = render(5, 1, 0, NuisanceFactors(2, 1, 2))
    assert base.pixels != moved.pixels
    assert label(base) == label(moved) == (5, 1, 0)


def test_label_render_round_trip_exhaustive():
    total = 0
    for d in range(10):
        for c in (0, 1):
            for b in (0, 1):
                for nu in all_nuisances():
                    assert label(render(d, c, b, nu)) == (d, c, b)
                    total += 1
    assert total == 10 * 2 * 2 * 5 * 5 * 2


def test_all_label_combinations_distinct_per_nuisance():
    for nu in (NuisanceFactors(), NuisanceFactors(-2, 2, 2)):
        seen = set()
        for d in range(10):
            for c in (0, 1):
                for b in (0, 1):
                    px = render(d, c, b, nu).pixels
                    assert px not in seen
                    seen.add(px)


def test_label_rejects_black_and_bar_only():
    black = ImageGrid(bytes(28 * 28 * 3))
    with pytest.raises(UnlabelableImageError):
        label(black)
    bar_only = bytearray(28 * 28 * 3)
    for r in range(3):
        for c in range(28):
            bar_only[(r * 28 + c) * 3 + 2] = 255
    with pytest.raises(UnlabelableImageError):
        label(ImageGrid(bytes(bar_only)))


def test_label_rejects_tampered_digit():
    img = bytearray(render(4, 1, 0, NuisanceFactors()).pixels)
    # flip one ink pixel off
    for k in range(0, len(img), 3):
        if img[k] == 255:
            img[k] = 0
            break
    with pytest.raises(UnlabelableImageError):
        label(ImageGrid(bytes(img)))


def test_nuisance_validation():
    with pytest.raises(DatasetError):
        NuisanceFactors(3, 0, 1)
    with pytest.raises(DatasetError):
        NuisanceFactors(0, 0, 5)


def test_export_backdoor(tmp_path, backdoor):
    rows = sample_labels(backdoor, 10, 5)
    manifest = export(backdoor, rows, str(tmp_path / "out"), 5)
    lines = open(manifest).read().splitlines()
    assert len(lines) == 11  # header + 10 rows
    assert lines[0] == (
        "id,model,seed,D,C,B,x_offset,y_offset,thickness,image_path"
    )
    ppms = [f for f in os.listdir(tmp_path / "out") if f.endswith(".ppm")]
    assert len(ppms) == 10
    with open(tmp_path / "out" / sorted(ppms)[0], "rb") as fh:
        data = fh.read()
    assert data.startswith(b"P6\n28 28\n255\n")
    assert len(data) == 13 + 2352  # "P6\n28 28\n255\n" header
    # manifest nuisance columns invert the rendering
    import csv

    with open(manifest) as fh:
        for rec in csv.DictReader(fh):
            img_path = tmp_path / "out" / rec["image_path"]
            img = ImageGrid(open(img_path, "rb").read()[13:])
            assert label(img) == (
                int(rec["D"]), int(rec["C"]), int(rec["B"])
            )


def test_export_face_labels_only(tmp_path, face_mstar):
    rows = sample_labels(face_mstar, 5, 1)
    manifest = export(face_mstar, rows, str(tmp_path / "face"), 1)
    lines = open(manifest).read().splitlines()
    assert len(lines) == 6
    assert lines[1].endswith(",,,,")  # no nuisance columns, no image
    assert not [
        f for f in os.listdir(tmp_path / "face") if f.endswith(".ppm")
    ]


def test_export_byte_identical(tmp_path, backdoor):
    rows = sample_labels(backdoor, 6, 3)
    p1 = export(backdoor, rows, str(tmp_path / "a"), 3)
    p2 = export(backdoor, rows, str(tmp_path / "b"), 3)
    for name in os.listdir(tmp_path / "a"):
        with open(tmp_path / "a" / name, "rb") as f1, open(
            tmp_path / "b" / name, "rb"
        ) as f2:
            assert f1.read() == f2.read()


def test_read_labels_csv_round_trip(tmp_path, face_mstar):
    rows = sample_labels(face_mstar, 20, 2)
    manifest = export(face_mstar, rows, str(tmp_path / "x"), 2)
    back = read_labels_csv(manifest, face_mstar.scm.endo_names)
    assert back == [
        {v: r[v] for v in face_mstar.scm.endo_names} for r in rows
    ]


def test_sample_labels_full_scale_tv(face_mstar, face_obs):
    # at full scale the empirical table sits within TV 0.01 of the exact one
    rows = sample_labels(face_mstar, 100_000, 42)
    emp = empirical_distribution(rows, face_obs.variables)
    assert emp.tv_distance(face_obs) < F(1, 100)
