"""Built-in models, label sampling, digit-with-bar rendering, and export.

The color/bar digit family renders 28x28 RGB images from three labels
(digit, color, bar) plus nuisance factors (position jitter, stroke
thickness) that are deliberately outside the label-level model.  The
labeling function inverts rendering exactly: a rendered image is matched
against the full template set and anything else is rejected rather than
guessed.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    Add,
    And,
    CausalDiagram,
    EndogenousVar,
    ExogenousFactor,
    FiniteDomain,
    Ge,
    Lt,
    Mul,
    Not,
    Or,
    Ref,
    Scm,
    Sub,
    Xor,
    induce_diagram,
    solver,
)
from .rng import SeedStream


class DatasetError(Exception):
    pass


class UnlabelableImageError(DatasetError):
    pass


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------

BIN = FiniteDomain((0, 1))


@dataclass(frozen=True)
class ReferenceTask:
    """A canned query with the interval reported for it elsewhere.

    The reported interval is display-only context for comparisons; nothing
    in the bound computation reads it.
    """

    name: str
    query: str
    care_set: tuple[str, ...]
    reported_interval: tuple[str, str] | None = None


@dataclass(frozen=True)
class BuiltinModel:
    name: str
    scm: Scm
    description: str
    rendered: bool = False
    tasks: tuple[ReferenceTask, ...] = ()

    @property
    def diagram(self) -> CausalDiagram:
        return induce_diagram(self.scm)


def _face_exo(p_h1: Fraction) -> tuple[ExogenousFactor, ...]:
    return (
        ExogenousFactor.bernoulli("U_F", Fraction(2, 5)),
        ExogenousFactor.bernoulli("U_Y", Fraction(2, 5)),
        ExogenousFactor.bernoulli("U_H1", p_h1),
        ExogenousFactor.bernoulli("U_H2", Fraction(1, 5)),
    )


def _face_scm(name: str, h_mech, p_h1=Fraction(2, 5), extra_exo=(), extra_vars=()):
    return Scm(
        name,
        _face_exo(p_h1) + tuple(extra_exo),
        (
            EndogenousVar("F", BIN, Xor(Ref("U_F"), Ref("U_Y"))),
            EndogenousVar("Y", BIN, Ref("U_Y")),
            EndogenousVar("H", BIN, h_mech),
        )
        + tuple(extra_vars),
    )


def _mk_face_mstar() -> Scm:
    # H responds to age: gray hair appears with different chances for the
    # young and the old.
    h = Xor(And(Not(Ref("Y")), Ref("U_H1")), And(Ref("Y"), Ref("U_H2")))
    return _face_scm("face_mstar", h)


def _mk_face_mprime() -> Scm:
    # Same observational behavior, but hair reads the latent age factor
    # directly, so do(Y) never changes it.
    h = Xor(And(Not(Ref("U_Y")), Ref("U_H1")), And(Ref("U_Y"), Ref("U_H2")))
    return _face_scm("face_mprime", h)


def _mk_face_m3() -> Scm:
    # A third observationally identical mechanism with yet another
    # counterfactual response.
    h = Or(And(Not(Ref("Y")), Ref("U_H1")), Ref("U_H2"))
    return _face_scm("face_m3", h, p_h1=Fraction(1, 4))


def _mk_face_m1_smile() -> Scm:
    h = Xor(And(Not(Ref("Y")), Ref("U_H1")), And(Ref("Y"), Ref("U_H2")))
    return _face_scm(
        "face_m1_smile",
        h,
        extra_exo=(ExogenousFactor.bernoulli("U_S", Fraction(1, 2)),),
        extra_vars=(EndogenousVar("S", BIN, Ref("U_S")),),
    )


def _mk_face_m2_smile() -> Scm:
    h = Xor(And(Not(Ref("Y")), Ref("U_H1")), And(Ref("Y"), Ref("U_H2")))
    return _face_scm(
        "face_m2_smile",
        h,
        extra_exo=(ExogenousFactor.bernoulli("U_S", Fraction(1, 2)),),
        extra_vars=(EndogenousVar("S", BIN, Xor(Ref("U_S"), Ref("Y"))),),
    )


DIGITS = FiniteDomain(tuple(range(10)))


def _mk_backdoor() -> Scm:
    # Digit and color share the latent U_D (confounding, positive
    # correlation: larger digits are more often red); digit and color both
    # lower the chance of a bar.  C = 1 iff U_C < 1 + 2*U_D, i.e.
    # Bernoulli(0.05 + 0.1*U_D) exactly.
    return Scm(
        "backdoor",
        (
            ExogenousFactor.uniform("U_D", 0, 9),
            ExogenousFactor.uniform("U_C", 0, 19),
            ExogenousFactor.bernoulli("U_1", Fraction(4, 5)),
            ExogenousFactor.bernoulli("U_2", Fraction(9, 10)),
            ExogenousFactor.bernoulli("U_3", Fraction(3, 4)),
        ),
        (
            EndogenousVar("D", DIGITS, Ref("U_D")),
            EndogenousVar("C", BIN, Lt(Sub(Ref("U_C"), Mul(Ref("U_D"), 2)), 1)),
            EndogenousVar(
                "B",
                BIN,
                And(
                    Or(
                        Xor(Ge(Ref("D"), 5), Ref("U_1")),
                        Xor(Ref("C"), Ref("U_2")),
                    ),
                    Ref("U_3"),
                ),
            ),
        ),
    )


def _mk_frontdoor() -> Scm:
    # Digit directly drives color (negative effect: larger digits are more
    # often green, C = 1 iff U_C < 19 - 2*D), color drives the bar, and the
    # digit shares U_D with the bar mechanism (confounding only).
    return Scm(
        "frontdoor",
        (
            ExogenousFactor.uniform("U_D", 0, 9),
            ExogenousFactor.uniform("U_C", 0, 19),
            ExogenousFactor.bernoulli("U_1", Fraction(4, 5)),
            ExogenousFactor.bernoulli("U_2", Fraction(9, 10)),
            ExogenousFactor.bernoulli("U_3", Fraction(7, 10)),
        ),
        (
            EndogenousVar("D", DIGITS, Ref("U_D")),
            EndogenousVar("C", BIN, Lt(Add(Ref("U_C"), Mul(Ref("D"), 2)), 19)),
            EndogenousVar(
                "B",
                BIN,
                And(
                    Or(
                        Xor(Lt(Ref("U_D"), 5), Ref("U_2")),
                        Xor(Ref("C"), Ref("U_1")),
                    ),
                    Ref("U_3"),
                ),
            ),
        ),
    )


_BACKDOOR_TASKS = (
    ReferenceTask(
        "edit-digit-keep-bar",
        "P(C[D=6]=1, B[D=6]=1 | D=3, C=1, B=1)",
        ("D", "C", "B"),
        ("0", "0.34"),
    ),
    ReferenceTask(
        "edit-digit-drop-bar",
        "P(C[D=6]=1, B[D=6]=0 | D=3, C=1, B=1)",
        ("D", "C", "B"),
        ("0.66", "1"),
    ),
    ReferenceTask(
        "remove-bar",
        "P(D[B=0]=1, C[B=0]=0 | D=1, C=0, B=1)",
        ("D", "C", "B"),
        ("1", "1"),
    ),
)

_FRONTDOOR_TASKS = (
    ReferenceTask(
        "edit-digit-keep-green-bar",
        "P(C[D=2]=0, B[D=2]=1 | D=7, C=0, B=1)",
        ("D", "C", "B"),
        ("0", "0.33"),
    ),
    ReferenceTask(
        "edit-digit-turn-red",
        "P(C[D=2]=1 | D=7, C=0, B=1)",
        ("D", "C", "B"),
        ("0.67", "1"),
    ),
    ReferenceTask(
        "edit-color-gain-bar",
        "P(D[C=0]=4, B[C=0]=1 | D=4, C=1, B=0)",
        ("D", "C", "B"),
        ("0.12", "1"),
    ),
    ReferenceTask(
        "edit-color-stay-barless",
        "P(D[C=0]=4, B[C=0]=0 | D=4, C=1, B=0)",
        ("D", "C", "B"),
        ("0", "0.88"),
    ),
)

_BUILTINS: dict[str, BuiltinModel] = {}


def _register(model: BuiltinModel):
    _BUILTINS[model.name] = model


_register(
    BuiltinModel(
        "face_mstar",
        _mk_face_mstar(),
        "gender/age/gray-hair model with confounded gender and age; "
        "hair responds to interventions on age",
    )
)
_register(
    BuiltinModel(
        "face_mprime",
        _mk_face_mprime(),
        "observationally identical to face_mstar but hair never responds "
        "to interventions on age",
    )
)
_register(
    BuiltinModel(
        "face_m3",
        _mk_face_m3(),
        "observationally identical to face_mstar with a third, distinct "
        "counterfactual hair response",
    )
)
_register(
    BuiltinModel(
        "face_m1_smile",
        _mk_face_m1_smile(),
        "face model plus an independent smile feature",
    )
)
_register(
    BuiltinModel(
        "face_m2_smile",
        _mk_face_m2_smile(),
        "face model plus a smile feature that flips under interventions "
        "on age yet looks identical observationally",
    )
)
_register(
    BuiltinModel(
        "backdoor",
        _mk_backdoor(),
        "digit/color/bar images; digit and color confounded, both "
        "suppress the bar",
        rendered=True,
        tasks=_BACKDOOR_TASKS,
    )
)
_register(
    BuiltinModel(
        "frontdoor",
        _mk_frontdoor(),
        "digit/color/bar images; digit drives color, color drives the "
        "bar, digit and bar confounded",
        rendered=True,
        tasks=_FRONTDOOR_TASKS,
    )
)


def builtin_names() -> tuple[str, ...]:
    return tuple(_BUILTINS)


def get_builtin(name: str) -> BuiltinModel:
    try:
        return _BUILTINS[name]
    except KeyError:
        raise DatasetError(
            f"unknown builtin {name!r}; available: {', '.join(_BUILTINS)}"
        ) from None


# ---------------------------------------------------------------------------
# Label sampling
# ---------------------------------------------------------------------------


class _FactorSampler:
    def __init__(self, factor: ExogenousFactor):
        denom = 1
        for m in factor.pmf.values():
            denom = denom * m.denominator // _gcd(denom, m.denominator)
        self.denom = denom
        self.cuts: list[tuple[int, int]] = []
        acc = 0
        for v in factor.support.values:
            acc += int(factor.pmf[v] * denom)
            self.cuts.append((acc, v))

    def draw(self, stream: SeedStream) -> int:
        k = stream.randrange(self.denom)
        for cut, v in self.cuts:
            if k < cut:
                return v
        return self.cuts[-1][1]


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def sample_exogenous(scm: Scm, stream: SeedStream) -> dict[str, int]:
    samplers = _exo_samplers(scm)
    return {f.name: s.draw(stream) for f, s in samplers}


_sampler_cache: dict[int, list] = {}


def _exo_samplers(scm: Scm):
    key = id(scm)
    if key not in _sampler_cache:
        _sampler_cache[key] = [(f, _FactorSampler(f)) for f in scm.exogenous]
    return _sampler_cache[key]


def sample_labels(model: BuiltinModel | Scm, n: int, seed: int) -> list[dict[str, int]]:
    """n independent draws from P(V); deterministic per seed."""
    if n < 1:
        raise DatasetError("n must be at least 1")
    scm = model.scm if isinstance(model, BuiltinModel) else model
    run = solver(scm)
    root = SeedStream("labels", scm.name, seed)
    rows = []
    for i in range(n):
        u = sample_exogenous(scm, root.child(i))
        rows.append(run(u))
    return rows


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

WIDTH = HEIGHT = 28
BAR_ROWS = 3
GLYPH_SCALE = 3
_BASE_ROW = 5
_BASE_COL = 6

_FONT = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

RED = (255, 0, 0)
GREEN = (0, 255, 0)
BLUE = (0, 0, 255)
BLACK = (0, 0, 0)


@dataclass(frozen=True)
class NuisanceFactors:
    """Rendering-only generative factors: jitter and stroke thickness."""

    x_offset: int = 0
    y_offset: int = 0
    thickness: int = 1

    def __post_init__(self):
        if not -2 <= self.x_offset <= 2 or not -2 <= self.y_offset <= 2:
            raise DatasetError("offsets must lie in -2..2")
        if self.thickness not in (1, 2):
            raise DatasetError("thickness must be 1 or 2")


@dataclass(frozen=True)
class ImageGrid:
    pixels: bytes  # row-major RGB, 28*28*3

    def __post_init__(self):
        if len(self.pixels) != WIDTH * HEIGHT * 3:
            raise DatasetError("image must be 28x28 RGB")

    def get(self, row: int, col: int) -> tuple[int, int, int]:
        k = (row * WIDTH + col) * 3
        return tuple(self.pixels[k:k + 3])

    def to_ppm(self) -> bytes:
        return b"P6\n28 28\n255\n" + self.pixels


def _glyph_pixels(digit: int, thickness: int) -> frozenset[tuple[int, int]]:
    """Glyph pixel set in a fixed 15x21 box; thickness dilates within it."""
    base = set()
    rows = _FONT[digit]
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == "1":
                for dr in range(GLYPH_SCALE):
                    for dc in range(GLYPH_SCALE):
                        base.add((r * GLYPH_SCALE + dr, c * GLYPH_SCALE + dc))
    if thickness == 2:
        h, w = 7 * GLYPH_SCALE, 5 * GLYPH_SCALE
        grown = set(base)
        for (r, c) in base:
            for dr, dc in ((0, 1), (1, 0), (1, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w:
                    grown.add((rr, cc))
        return frozenset(grown)
    return frozenset(base)


def render(
    digit: int,
    color: int,
    bar: int,
    nuisance: NuisanceFactors | None = None,
    seed: int | None = None,
) -> ImageGrid:
    """Deterministic flat rendering of the three labels.

    The digit glyph sits strictly below the bar band for every allowed
    offset, so labels never occlude each other.
    """
    if digit not in _FONT:
        raise DatasetError(f"digit {digit} outside 0..9")
    if color not in (0, 1) or bar not in (0, 1):
        raise DatasetError("color and bar must be 0 or 1")
    if nuisance is None:
        nuisance = (
            sample_nuisance(SeedStream("nuisance", seed))
            if seed is not None
            else NuisanceFactors()
        )
    buf = bytearray(WIDTH * HEIGHT * 3)
    if bar == 1:
        for r in range(BAR_ROWS):
            for c in range(WIDTH):
                k = (r * WIDTH + c) * 3
                buf[k:k + 3] = bytes(BLUE)
    ink = RED if color == 1 else GREEN
    row0 = _BASE_ROW + nuisance.y_offset
    col0 = _BASE_COL + nuisance.x_offset
    for (gr, gc) in _glyph_pixels(digit, nuisance.thickness):
        r, c = row0 + gr, col0 + gc
        k = (r * WIDTH + c) * 3
        buf[k:k + 3] = bytes(ink)
    return ImageGrid(bytes(buf))


def sample_nuisance(stream: SeedStream) -> NuisanceFactors:
    return NuisanceFactors(
        x_offset=stream.randrange(5) - 2,
        y_offset=stream.randrange(5) - 2,
        thickness=1 + stream.randrange(2),
    )


def all_nuisances() -> list[NuisanceFactors]:
    return [
        NuisanceFactors(dx, dy, t)
        for dx in range(-2, 3)
        for dy in range(-2, 3)
        for t in (1, 2)
    ]


_template_index: dict[frozenset, tuple[int, NuisanceFactors]] | None = None


def _templates() -> dict[frozenset, tuple[int, NuisanceFactors]]:
    global _template_index
    if _template_index is None:
        index: dict[frozenset, tuple[int, NuisanceFactors]] = {}
        for d in range(10):
            for nu in all_nuisances():
                pix = frozenset(
                    (_BASE_ROW + nu.y_offset + r, _BASE_COL + nu.x_offset + c)
                    for (r, c) in _glyph_pixels(d, nu.thickness)
                )
                index[pix] = (d, nu)
        _template_index = index
    return _template_index


def label(image: ImageGrid) -> tuple[int, int, int]:
    """Invert rendering exactly: (digit, color, bar) or an error.

    Bar detection demands the top band be uniformly blue or uniformly
    black; the digit must match one glyph template pixel for pixel.  No
    guessing: anything else raises :class:`UnlabelableImageError`.
    """
    top = {image.get(r, c) for r in range(BAR_ROWS) for c in range(WIDTH)}
    if top == {BLUE}:
        bar = 1
    elif top == {BLACK}:
        bar = 0
    else:
        raise UnlabelableImageError("top band is neither a bar nor empty")

    ink_pixels = set()
    colors = set()
    for r in range(BAR_ROWS, HEIGHT):
        for c in range(WIDTH):
            px = image.get(r, c)
            if px != BLACK:
                ink_pixels.add((r, c))
                colors.add(px)
    if not ink_pixels:
        raise UnlabelableImageError("no digit found")
    if colors == {RED}:
        color = 1
    elif colors == {GREEN}:
        color = 0
    else:
        raise UnlabelableImageError(f"mixed or unknown ink colors {colors}")

    hit = _templates().get(frozenset(ink_pixels))
    if hit is None:
        raise UnlabelableImageError("digit does not match any glyph template")
    return hit[0], color, bar


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def export(
    model: BuiltinModel,
    rows: list[dict[str, int]],
    out_dir: str,
    seed: int,
    render_images: bool | None = None,
) -> str:
    """Write a CSV manifest and, for rendered families, one PPM per row.

    Returns the manifest path.  Re-exporting with the same inputs produces
    byte-identical files.
    """
    if render_images is None:
        render_images = model.rendered
    if render_images and not model.rendered:
        raise DatasetError(f"{model.name} is a label-only family")
    os.makedirs(out_dir, exist_ok=True)
    var_names = model.scm.endo_names
    manifest_path = os.path.join(out_dir, "manifest.csv")
    nuis_stream = SeedStream("nuisance", model.name, seed)
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["id", "model", "seed", *var_names,
             "x_offset", "y_offset", "thickness", "image_path"]
        )
        for i, row in enumerate(rows):
            if render_images:
                nu = sample_nuisance(nuis_stream.child(i))
                img = render(row["D"], row["C"], row["B"], nu)
                image_name = f"{model.name}_{seed}_{i:06d}.ppm"
                with open(os.path.join(out_dir, image_name), "wb") as imfh:
                    imfh.write(img.to_ppm())
                extra = [nu.x_offset, nu.y_offset, nu.thickness, image_name]
            else:
                extra = ["", "", "", ""]
            writer.writerow(
                [i, model.name, seed, *(row[v] for v in var_names), *extra]
            )
    return manifest_path


def read_labels_csv(path: str, variables: tuple[str, ...]) -> list[dict[str, int]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [v for v in variables if v not in (reader.fieldnames or ())]
        if missing:
            raise DatasetError(f"CSV lacks columns {missing}")
        for rec in reader:
            rows.append({v: int(rec[v]) for v in variables})
    if not rows:
        raise DatasetError("empty label CSV")
    return rows
