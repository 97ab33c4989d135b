"""Textual model and query format.

The grammar is deliberately prefix-only; the built-in models and every
formula fed to this parser are fully parenthesized function calls, so the
text admits exactly one reading::

    model face {
      exo U_F ~ bernoulli(2/5)
      var F : {0, 1} = xor(U_F, U_Y)
      ...
    }

Rationals are written ``p/q`` or as decimal literals, which convert
exactly (``0.4`` is ``2/5``).  ``#`` starts a comment.  Queries look like
``P(F[Y=0]=0, H[Y=0]=1 | F=0, Y=1, H=0)``: the bracketed suffix is the
intervention context of that event, bare terms carry an empty context, and
the clause after ``|`` is factual conditioning.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from . import core
from .core import (
    Add,
    And,
    Const,
    Eq,
    ExogenousFactor,
    Expr,
    FiniteDomain,
    Ge,
    Lt,
    Mul,
    Not,
    Or,
    Ref,
    Scm,
    Sub,
    TableExpr,
    Xor,
    EndogenousVar,
)
from .engine import CtfQuery


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    offset: int
    length: int


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    message: str
    expected: tuple[str, ...] = ()

    def __str__(self) -> str:
        s = f"{self.span.line}:{self.span.column}: {self.message}"
        if self.expected:
            s += f" (expected {', '.join(self.expected)})"
        return s


class DslError(Exception):
    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors))


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_PUNCT = "{}():,~=|[]"


@dataclass(frozen=True)
class _Token:
    kind: str  # 'ident', 'number', punct char, 'eof'
    text: str
    span: SourceSpan


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_i, start_col = i, col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(
                _Token("ident", text[i:j], SourceSpan(line, start_col, i, j - i))
            )
            col += j - i
            i = j
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] in "./" and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            tokens.append(
                _Token("number", text[i:j], SourceSpan(line, start_col, i, j - i))
            )
            col += j - i
            i = j
            continue
        if ch in _PUNCT:
            tokens.append(_Token(ch, ch, SourceSpan(line, start_col, i, 1)))
            i += 1
            col += 1
            continue
        raise DslError(
            [ParseError(SourceSpan(line, start_col, i, 1), f"stray character {ch!r}")]
        )
    tokens.append(_Token("eof", "", SourceSpan(line, col, n, 0)))
    return tokens


def _number_value(text: str) -> Fraction:
    if "/" in text:
        num, den = text.split("/")
        return Fraction(int(num), int(den))
    if "." in text:
        whole, frac = text.split(".")
        sign = -1 if whole.startswith("-") else 1
        whole_i = int(whole) if whole not in ("", "-") else 0
        return Fraction(whole_i) + sign * Fraction(int(frac), 10 ** len(frac))
    return Fraction(int(text))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.semantic_errors: list[ParseError] = []

    # -- token plumbing ------------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, tok: _Token, message: str, expected: tuple[str, ...] = ()):
        raise DslError([ParseError(tok.span, message, expected)])

    def expect(self, kind: str, what: str | None = None) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            self.fail(
                tok,
                f"unexpected {tok.text!r}" if tok.text else "unexpected end of input",
                (what or kind,),
            )
        return tok

    def expect_ident(self, word: str | None = None) -> _Token:
        tok = self.expect("ident", word or "identifier")
        if word is not None and tok.text != word:
            self.fail(tok, f"unexpected {tok.text!r}", (word,))
        return tok

    def expect_int(self) -> tuple[int, _Token]:
        tok = self.expect("number", "integer")
        val = _number_value(tok.text)
        if val.denominator != 1:
            self.fail(tok, "expected an integer, got a rational")
        return int(val), tok

    def semantic(self, span: SourceSpan, message: str):
        self.semantic_errors.append(ParseError(span, message))

    # -- model grammar -------------------------------------------------------

    def parse_model(self) -> Scm:
        self.expect_ident("model")
        name = self.expect("ident", "model name").text
        self.expect("{")
        exos: list[ExogenousFactor] = []
        variables: list[tuple[EndogenousVar, SourceSpan]] = []
        declared_spans: dict[str, SourceSpan] = {}
        refs_seen: list[tuple[str, SourceSpan]] = []
        bern_sites: list[tuple[int, "_BernExpr", SourceSpan]] = []

        while self.peek().kind != "}":
            tok = self.peek()
            if tok.kind != "ident":
                self.fail(tok, f"unexpected {tok.text!r}", ("exo", "var", "}"))
            if tok.text == "exo":
                factor, span = self.parse_exo()
                if factor.name in declared_spans:
                    self.semantic(span, f"duplicate name {factor.name!r}")
                declared_spans[factor.name] = span
                exos.append(factor)
            elif tok.text == "var":
                var, span, refs, bern = self.parse_var()
                if var.name in declared_spans:
                    self.semantic(span, f"duplicate name {var.name!r}")
                declared_spans[var.name] = span
                refs_seen.extend(refs)
                if bern is not None:
                    bern_sites.append((len(variables), bern, span))
                variables.append((var, span))
            else:
                self.fail(tok, f"unexpected {tok.text!r}", ("exo", "var"))
        self.expect("}")
        closing = self.expect("eof")

        if not variables:
            self.semantic(closing.span, "at least one variable required")

        known = set(declared_spans)
        for ref, span in refs_seen:
            if ref not in known:
                self.semantic(span, f"unknown variable {ref!r}")

        if self.semantic_errors:
            raise DslError(self.semantic_errors)

        # Desugar expression-parameter Bernoulli mechanisms into a threshold
        # table over a fresh uniform factor (one-way; the printer emits the
        # desugared form).
        scm = Scm(name, tuple(exos), tuple(v for v, _ in variables))
        for idx, bern, span in bern_sites:
            scm = _desugar_bern(self, scm, idx, bern, span)
        if self.semantic_errors:
            raise DslError(self.semantic_errors)

        report = core.validate(scm)
        if not report.ok:
            errors = [
                ParseError(
                    declared_spans.get(issue.subject, closing.span),
                    f"{issue.kind}: {issue.message}",
                )
                for issue in report.issues
            ]
            raise DslError(errors)
        return scm

    def parse_exo(self) -> tuple[ExogenousFactor, SourceSpan]:
        self.expect_ident("exo")
        name_tok = self.expect("ident", "factor name")
        self.expect("~")
        kind = self.expect("ident", "distribution")
        if kind.text == "bernoulli":
            self.expect("(")
            p_tok = self.expect("number", "rational")
            p = _number_value(p_tok.text)
            self.expect(")")
            if not 0 <= p <= 1:
                self.semantic(p_tok.span, f"bernoulli parameter {p} outside [0,1]")
                p = Fraction(0)
            return ExogenousFactor.bernoulli(name_tok.text, p), name_tok.span
        if kind.text == "uniform":
            self.expect("(")
            lo, _ = self.expect_int()
            self.expect(",")
            hi, hi_tok = self.expect_int()
            self.expect(")")
            if hi < lo:
                self.semantic(hi_tok.span, f"empty uniform range [{lo}, {hi}]")
                hi = lo
            return ExogenousFactor.uniform(name_tok.text, lo, hi), name_tok.span
        if kind.text == "pmf":
            self.expect("{")
            pmf: dict[int, Fraction] = {}
            while True:
                v, v_tok = self.expect_int()
                self.expect(":")
                m_tok = self.expect("number", "rational")
                if v in pmf:
                    self.semantic(v_tok.span, f"duplicate pmf value {v}")
                pmf[v] = _number_value(m_tok.text)
                if self.peek().kind == ",":
                    self.next()
                    continue
                break
            self.expect("}")
            total = sum(pmf.values(), Fraction(0))
            if total != 1 or any(m < 0 for m in pmf.values()):
                self.semantic(
                    name_tok.span,
                    f"pmf of {name_tok.text!r} must be nonnegative and sum to 1 "
                    f"(got total {total})",
                )
            return ExogenousFactor.from_pmf(name_tok.text, pmf), name_tok.span
        self.fail(kind, f"unknown distribution {kind.text!r}",
                  ("bernoulli", "uniform", "pmf"))

    def parse_var(self):
        self.expect_ident("var")
        name_tok = self.expect("ident", "variable name")
        self.expect(":")
        self.expect("{")
        values = []
        while True:
            v, _ = self.expect_int()
            values.append(v)
            if self.peek().kind == ",":
                self.next()
                continue
            break
        self.expect("}")
        self.expect("=")
        refs: list[tuple[str, SourceSpan]] = []
        expr, bern = self.parse_expr(refs, allow_bern=True)
        try:
            domain = FiniteDomain(tuple(values))
        except core.ScmError as e:
            self.semantic(name_tok.span, str(e))
            domain = FiniteDomain(tuple(sorted(set(values))))
        var = EndogenousVar(name_tok.text, domain, expr)
        return var, name_tok.span, refs, bern

    def parse_expr(self, refs, allow_bern=False):
        """Returns (expr, bern_payload-or-None)."""
        tok = self.next()
        if tok.kind == "number":
            val = _number_value(tok.text)
            if val.denominator != 1:
                self.fail(tok, "rational literal outside bern(...)")
            return Const(int(val)), None
        if tok.kind != "ident":
            self.fail(tok, f"unexpected {tok.text!r}", ("expression",))
        head = tok.text
        if self.peek().kind not in ("(",):
            refs.append((head, tok.span))
            return Ref(head), None

        if head == "table":
            return self.parse_table(refs, tok), None
        if head == "bern":
            if not allow_bern:
                self.fail(tok, "bern(...) is only allowed as a full mechanism")
            self.expect("(")
            p_refs: list[tuple[str, SourceSpan]] = []
            pexpr = self.parse_pexpr(p_refs)
            self.expect(")")
            refs.extend(p_refs)
            return Const(0), _BernExpr(pexpr, tuple(r for r, _ in p_refs), tok.span)

        self.expect("(")
        if head == "not":
            a, _ = self.parse_expr(refs)
            self.expect(")")
            return Not(a), None
        if head in ("and", "or", "xor", "add", "sub"):
            a, _ = self.parse_expr(refs)
            self.expect(",")
            b, _ = self.parse_expr(refs)
            self.expect(")")
            ctor = {"and": And, "or": Or, "xor": Xor, "add": Add, "sub": Sub}[head]
            return ctor(a, b), None
        if head in ("eq", "ge", "lt"):
            a, _ = self.parse_expr(refs)
            self.expect(",")
            k, _ = self.expect_int()
            self.expect(")")
            ctor = {"eq": Eq, "ge": Ge, "lt": Lt}[head]
            return ctor(a, k), None
        if head == "mul":
            a, _ = self.parse_expr(refs)
            self.expect(",")
            b, b_tok = None, self.peek()
            b, _ = self.parse_expr(refs)
            self.expect(")")
            if isinstance(b, Const):
                return Mul(a, b.value), None
            if isinstance(a, Const):
                return Mul(b, a.value), None
            self.fail(b_tok, "mul needs one constant operand")
        self.fail(tok, f"unknown function {head!r}",
                  ("not", "and", "or", "xor", "eq", "ge", "lt",
                   "add", "sub", "mul", "table", "bern"))

    def parse_table(self, refs, head_tok) -> TableExpr:
        self.expect("(")
        inputs = []
        while True:
            t = self.expect("ident", "input name")
            inputs.append(t.text)
            refs.append((t.text, t.span))
            if self.peek().kind == ",":
                self.next()
                continue
            break
        self.expect(")")
        self.expect("{")
        mapping: dict[tuple[int, ...], int] = {}
        while True:
            self.expect("(")
            key = []
            while True:
                v, _ = self.expect_int()
                key.append(v)
                if self.peek().kind == ",":
                    self.next()
                    continue
                break
            close = self.expect(")")
            if len(key) != len(inputs):
                self.semantic(close.span,
                              f"table key arity {len(key)} != {len(inputs)} inputs")
            self.expect(":")
            out, out_tok = self.expect_int()
            k = tuple(key)
            if k in mapping:
                self.semantic(out_tok.span, f"duplicate table key {k}")
            mapping[k] = out
            if self.peek().kind == ",":
                self.next()
                continue
            break
        self.expect("}")
        return TableExpr(tuple(inputs), mapping)

    # -- rational expressions inside bern(...) --------------------------------

    def parse_pexpr(self, refs):
        tok = self.next()
        if tok.kind == "number":
            return _PConst(_number_value(tok.text))
        if tok.kind != "ident":
            self.fail(tok, f"unexpected {tok.text!r}", ("rational expression",))
        if self.peek().kind != "(":
            refs.append((tok.text, tok.span))
            return _PRef(tok.text)
        if tok.text not in ("add", "sub", "mul"):
            self.fail(tok, f"unknown function {tok.text!r} in bern(...)",
                      ("add", "sub", "mul"))
        self.expect("(")
        a = self.parse_pexpr(refs)
        self.expect(",")
        b = self.parse_pexpr(refs)
        self.expect(")")
        return _POp(tok.text, a, b)

    # -- query grammar ---------------------------------------------------------

    def parse_query(self) -> CtfQuery:
        p = self.expect_ident("P")
        self.expect("(")
        events = []
        while True:
            events.append(self.parse_event())
            if self.peek().kind == ",":
                self.next()
                continue
            break
        conditioning = []
        if self.peek().kind == "|":
            self.next()
            while True:
                name = self.expect("ident", "variable").text
                self.expect("=")
                val, _ = self.expect_int()
                conditioning.append((name, val))
                if self.peek().kind == ",":
                    self.next()
                    continue
                break
        self.expect(")")
        self.expect("eof")
        seen_cond = set()
        for name, _ in conditioning:
            if name in seen_cond:
                self.fail(p, f"duplicate conditioning variable {name!r}")
            seen_cond.add(name)
        try:
            return CtfQuery.build(events, tuple(sorted(conditioning)))
        except Exception as e:  # duplicate (variable, context) pairs
            self.fail(p, str(e))

    def parse_event(self):
        name_tok = self.expect("ident", "variable")
        context: dict[str, int] = {}
        if self.peek().kind == "[":
            self.next()
            while True:
                t = self.expect("ident", "intervention target")
                self.expect("=")
                v, _ = self.expect_int()
                if t.text in context:
                    self.fail(t, f"duplicate intervention target {t.text!r}")
                context[t.text] = v
                if self.peek().kind == ",":
                    self.next()
                    continue
                break
            self.expect("]")
        self.expect("=")
        val, _ = self.expect_int()
        return (name_tok.text, val, context)


@dataclass(frozen=True)
class _PConst:
    value: Fraction


@dataclass(frozen=True)
class _PRef:
    name: str


@dataclass(frozen=True)
class _POp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class _BernExpr:
    pexpr: object
    inputs: tuple[str, ...]
    span: SourceSpan


def _eval_pexpr(p, env: Mapping[str, int]) -> Fraction:
    if isinstance(p, _PConst):
        return p.value
    if isinstance(p, _PRef):
        return Fraction(env[p.name])
    a, b = _eval_pexpr(p.left, env), _eval_pexpr(p.right, env)
    if p.op == "add":
        return a + b
    if p.op == "sub":
        return a - b
    return a * b


def _lcm(a: int, b: int) -> int:
    g, x = a, b
    while x:
        g, x = x, g % x
    return a * b // g


_BERN_TABLE_LIMIT = 100_000


def _desugar_bern(parser: _Parser, scm: Scm, var_index: int, bern: _BernExpr,
                  span: SourceSpan) -> Scm:
    """Replace a bern(p-expr) mechanism by a threshold over a fresh uniform
    factor whose grain is the lcm of the probability denominators."""
    var = scm.endogenous[var_index]
    inputs: list[str] = []
    for name in bern.inputs:
        if name not in inputs:
            inputs.append(name)
    domains = [scm.domain(i).values for i in inputs]
    import itertools as _it

    probs: dict[tuple[int, ...], Fraction] = {}
    grain = 1
    for combo in _it.product(*domains):
        env = dict(zip(inputs, combo))
        p = _eval_pexpr(bern.pexpr, env)
        if not 0 <= p <= 1:
            parser.semantic(bern.span,
                            f"bern parameter {p} outside [0,1] at {env}")
            return scm
        probs[combo] = p
        grain = _lcm(grain, p.denominator)
    size = grain
    for d in domains:
        size *= len(d)
    if size > _BERN_TABLE_LIMIT:
        parser.semantic(bern.span, f"bern table would need {size} entries")
        return scm

    taken = set(scm.exo_names) | set(scm.endo_names)
    uname = f"U_{var.name}"
    while uname in taken:
        uname += "_"
    factor = ExogenousFactor.uniform(uname, 0, grain - 1)
    mapping = {}
    for combo, p in probs.items():
        cut = int(p * grain)
        for u in range(grain):
            mapping[combo + (u,)] = 1 if u < cut else 0
    mech = TableExpr(tuple(inputs) + (uname,), mapping)
    new_vars = list(scm.endogenous)
    new_vars[var_index] = EndogenousVar(var.name, var.domain, mech)
    return Scm(scm.name, scm.exogenous + (factor,), tuple(new_vars))


def parse_model(text: str) -> Scm:
    """Parse and validate a model; raises :class:`DslError` with spans."""
    return _Parser(text).parse_model()


def parse_query(text: str) -> CtfQuery:
    return _Parser(text).parse_query()


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------


def _frac(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _format_dist(f: ExogenousFactor) -> str:
    vals = f.support.values
    if vals == (0, 1):
        return f"bernoulli({_frac(f.pmf[1])})"
    mass = Fraction(1, len(vals))
    contiguous = vals == tuple(range(vals[0], vals[-1] + 1))
    if contiguous and all(f.pmf[v] == mass for v in vals):
        return f"uniform({vals[0]}, {vals[-1]})"
    inner = ", ".join(f"{v}: {_frac(f.pmf[v])}" for v in vals)
    return f"pmf{{{inner}}}"


def format_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Not):
        return f"not({format_expr(e.arg)})"
    if isinstance(e, And):
        return f"and({format_expr(e.left)}, {format_expr(e.right)})"
    if isinstance(e, Or):
        return f"or({format_expr(e.left)}, {format_expr(e.right)})"
    if isinstance(e, Xor):
        return f"xor({format_expr(e.left)}, {format_expr(e.right)})"
    if isinstance(e, Eq):
        return f"eq({format_expr(e.arg)}, {e.const})"
    if isinstance(e, Ge):
        return f"ge({format_expr(e.arg)}, {e.const})"
    if isinstance(e, Lt):
        return f"lt({format_expr(e.arg)}, {e.const})"
    if isinstance(e, Add):
        return f"add({format_expr(e.left)}, {format_expr(e.right)})"
    if isinstance(e, Sub):
        return f"sub({format_expr(e.left)}, {format_expr(e.right)})"
    if isinstance(e, Mul):
        return f"mul({format_expr(e.arg)}, {e.const})"
    if isinstance(e, TableExpr):
        entries = ", ".join(
            f"({', '.join(str(k) for k in key)}): {out}"
            for key, out in sorted(e.mapping.items())
        )
        return f"table({', '.join(e.inputs)}){{{entries}}}"
    raise TypeError(f"cannot format {e!r}")


def format_model(scm: Scm) -> str:
    """Canonical text; ``parse_model(format_model(m))`` equals ``m``."""
    lines = [f"model {scm.name} {{"]
    for f in scm.exogenous:
        lines.append(f"  exo {f.name} ~ {_format_dist(f)}")
    for v in scm.endogenous:
        dom = ", ".join(str(x) for x in v.domain.values)
        lines.append(f"  var {v.name} : {{{dom}}} = {format_expr(v.mechanism)}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def format_query(q: CtfQuery) -> str:
    return q.pretty()
