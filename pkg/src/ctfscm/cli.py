"""Command-line interface.

Exit codes follow sysexits: 64 usage, 65 bad data, 74 I/O, 70 internal.
JSON outputs are schema-stable and sorted; identical arguments and seeds
produce byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import __version__
from .bounds import AnalyticPatternError, analytic_bounds, optimal_bounds, \
    oracle_inner_bounds
from .canonical import BoundsInputError
from .consistency import (
    ConsistencyError,
    check_ctf_consistency,
    empirical_distribution,
    read_log,
)
from .core import CausalDiagram, Scm, induce_diagram, validate
from .datasets import (
    DatasetError,
    builtin_names,
    export,
    get_builtin,
    read_labels_csv,
    sample_labels,
)
from .dsl import DslError, parse_model, parse_query
from .engine import (
    EngineError,
    ZeroConditioningError,
    compare_models,
    conditional_ctf,
    observational,
)

EX_OK = 0
EX_USAGE = 64
EX_DATAERR = 65
EX_SOFTWARE = 70
EX_IOERR = 74


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fstr(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _decimal(x: Fraction) -> str:
    return f"{float(x):.6g}"


def _load_model(args) -> Scm:
    if getattr(args, "builtin", None):
        return get_builtin(args.builtin).scm
    path = args.model
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise _IoError(f"{path}: {e.strerror or e}") from None
    return parse_model(text)


class _IoError(Exception):
    pass


def _parse_diagram_spec(spec: str, nodes) -> CausalDiagram:
    directed = []
    bidirected = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if "<->" in part:
            a, b = (s.strip() for s in part.split("<->", 1))
            bidirected.append((a, b))
        elif "->" in part:
            a, b = (s.strip() for s in part.split("->", 1))
            directed.append((a, b))
        else:
            raise UsageError(f"bad edge spec {part!r} (use A->B or A<->B)")
    return CausalDiagram.build(tuple(nodes), directed, bidirected)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_validate(args) -> int:
    path = args.file
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        print(f"error: {path}: {e.strerror or e}", file=sys.stderr)
        return EX_IOERR
    try:
        scm = parse_model(text)
    except DslError as e:
        for err in e.errors:
            print(f"{path}:{err}", file=sys.stderr)
        return EX_DATAERR
    report = validate(scm)
    if args.json:
        _print_json(
            {
                "ok": report.ok,
                "issues": [
                    {"kind": i.kind, "subject": i.subject, "message": i.message}
                    for i in report.issues
                ],
            }
        )
    else:
        print(f"{scm.name}: {report}")
    return EX_OK if report.ok else EX_DATAERR


def _cmd_query(args) -> int:
    scm = _load_model(args)
    query = parse_query(args.query)
    value = conditional_ctf(scm, query)
    if args.json:
        _print_json(
            {
                "query": query.pretty(),
                "value": _fstr(value),
                "decimal": float(value),
            }
        )
    else:
        print(f"{_fstr(value)} ({_decimal(value)})")
    return EX_OK


def _cmd_bounds(args) -> int:
    scm = _load_model(args)
    query = parse_query(args.query)
    diagram = induce_diagram(scm)
    if args.graph:
        diagram = _parse_diagram_spec(args.graph, scm.endo_names)
    if args.care:
        care = [v.strip() for v in args.care.split(",") if v.strip()]
        unknown = [v for v in care if v not in scm.endo_names]
        if unknown:
            raise UsageError(f"care set names unknown variables {unknown}")
        allowed = set(care)
        outside = [
            e.variable for e in query.events if e.variable not in allowed
        ] + [k for k, _ in query.conditioning if k not in allowed]
        if outside:
            raise UsageError(
                f"query uses variables outside the care set: {sorted(set(outside))}"
            )
    obs = observational(scm)
    domains = {v.name: v.domain for v in scm.endogenous}
    if args.method == "analytic":
        result = analytic_bounds(obs, diagram, query, domains=domains)
    else:
        result = optimal_bounds(
            obs, diagram, query, domains=domains, seed=args.seed
        )
        if args.method == "lp" and result.method == "heuristic":
            raise BoundsInputError(
                "query needs the heuristic path; rerun with --method auto"
            )
    payload = result.to_json_dict()
    if args.oracle:
        lo, hi = oracle_inner_bounds(
            obs, diagram, query, args.oracle, args.seed, domains=domains
        )
        payload["oracle_lower"] = _fstr(lo)
        payload["oracle_upper"] = _fstr(hi)
    if args.json:
        _print_json(payload)
    else:
        line = (
            f"lower {_fstr(result.lower)} ({_decimal(result.lower)})  "
            f"upper {_fstr(result.upper)} ({_decimal(result.upper)})  "
            f"method={result.method}"
            f"{' certified' if result.certified else ' UNCERTIFIED'}"
        )
        print(line)
        if args.oracle:
            print(
                f"oracle [{_fstr(lo)}, {_fstr(hi)}] from {args.oracle} samples"
            )
    return EX_OK


def _cmd_compare(args) -> int:
    def load(path_or_builtin):
        if path_or_builtin in builtin_names():
            return get_builtin(path_or_builtin).scm
        try:
            with open(path_or_builtin, encoding="utf-8") as fh:
                return parse_model(fh.read())
        except OSError as e:
            raise _IoError(f"{path_or_builtin}: {e.strerror or e}") from None

    first = load(args.first)
    second = load(args.second)
    queries = [parse_query(q) for q in args.query or []]
    report = compare_models(first, second, queries)
    if args.json:
        _print_json(report.to_json_dict())
    else:
        print(f"observational_equal: {report.observational_equal}")
        print(f"diagrams_equal: {report.diagrams_equal}")
        for qc in report.queries:
            print(
                f"{qc.query.pretty()}: "
                f"{_fstr(qc.value_first)} vs {_fstr(qc.value_second)}"
            )
    return EX_OK


def _cmd_sample(args) -> int:
    model = get_builtin(args.builtin)
    rows = sample_labels(model, args.n, args.seed)
    import csv as _csv

    try:
        with open(args.output, "w", newline="") as fh:
            writer = _csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "model", "seed", *model.scm.endo_names])
            for i, row in enumerate(rows):
                writer.writerow(
                    [i, model.name, args.seed,
                     *(row[v] for v in model.scm.endo_names)]
                )
    except OSError as e:
        raise _IoError(f"{args.output}: {e.strerror or e}") from None
    print(f"wrote {len(rows)} rows to {args.output}")
    return EX_OK


def _cmd_gen(args) -> int:
    model = get_builtin(args.builtin)
    if not model.rendered:
        raise UsageError(f"{model.name} is label-only; use `sample`")
    rows = sample_labels(model, args.n, args.seed)
    try:
        manifest = export(model, rows, args.output, args.seed, render_images=True)
    except OSError as e:
        raise _IoError(f"{args.output}: {e.strerror or e}") from None
    print(f"wrote manifest {manifest} and {len(rows)} images")
    return EX_OK


def _cmd_check(args) -> int:
    model = get_builtin(args.builtin)
    diagram = model.diagram
    domains = {v.name: v.domain for v in model.scm.endogenous}
    if args.obs:
        try:
            rows = read_labels_csv(args.obs, model.scm.endo_names)
        except OSError as e:
            raise _IoError(f"{args.obs}: {e.strerror or e}") from None
        obs_ref = empirical_distribution(rows, model.scm.endo_names)
    else:
        obs_ref = observational(model.scm)
    try:
        records = read_log(args.log)
    except OSError as e:
        raise _IoError(f"{args.log}: {e.strerror or e}") from None
    care = tuple(v.strip() for v in args.care.split(",") if v.strip()) \
        if args.care else model.scm.endo_names
    unknown = [v for v in care if v not in model.scm.endo_names]
    if unknown:
        raise UsageError(f"care set names unknown variables {unknown}")
    report = check_ctf_consistency(
        obs_ref,
        records,
        diagram,
        care,
        eps_obs=Fraction(args.eps).limit_denominator(10**6),
        delta=Fraction(args.delta).limit_denominator(10**6),
        domains=domains,
    )
    if args.json:
        _print_json(report.to_json_dict())
    else:
        print(f"verdict: {report.verdict}")
        print(
            f"observational tv: {_fstr(report.observational_tv)} "
            f"({_decimal(report.observational_tv)}), eps {_decimal(report.eps_obs)}"
        )
        bad = [c for c in report.cells if not c.in_bound]
        print(f"cells: {len(report.cells)} checked, {len(bad)} out of bound, "
              f"{len(report.skipped)} skipped")
        for c in bad[:10]:
            print(
                f"  w={dict(c.w)} w'={dict(c.w_prime)} "
                f"estimate {_fstr(c.estimate)} outside "
                f"[{_fstr(c.lower)}, {_fstr(c.upper)}]"
            )
    return report.exit_code


def _cmd_models(args) -> int:
    rows = []
    for name in builtin_names():
        model = get_builtin(name)
        rows.append(
            {
                "name": name,
                "variables": list(model.scm.endo_names),
                "exogenous_atoms": model.scm.atom_count(),
                "rendered": model.rendered,
                "description": model.description,
            }
        )
    if args.json:
        _print_json(rows)
    else:
        for r in rows:
            kind = "images" if r["rendered"] else "labels"
            print(
                f"{r['name']:16s} {','.join(r['variables']):10s} "
                f"{r['exogenous_atoms']:6d} atoms  [{kind}]  {r['description']}"
            )
    return EX_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="ctfscm",
        description="Exact counterfactual reasoning over finite structural "
        "causal models: queries, optimal bounds, datasets, and proxy "
        "consistency checks.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_validate)

    def add_model_args(p):
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("-m", "--model", help="path to a .scm file")
        group.add_argument("--builtin", choices=builtin_names())

    p = sub.add_parser("query", help="evaluate a counterfactual query exactly")
    add_model_args(p)
    p.add_argument("-q", "--query", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("bounds", help="optimal bounds from the observational "
                       "distribution and the diagram")
    add_model_args(p)
    p.add_argument("-q", "--query", required=True)
    p.add_argument("-g", "--graph", help="diagram override, e.g. 'Y->H;F<->Y' "
                   "(default: induced by the model)")
    p.add_argument("-w", "--care", help="comma-separated care set; the query "
                   "must stay inside it (default: all variables)")
    p.add_argument("--method", choices=("auto", "analytic", "lp"),
                   default="auto")
    p.add_argument("--oracle", type=int, default=0, metavar="N",
                   help="also sample an N-draw inner-bound interval")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("compare", help="compare two models on shared queries")
    p.add_argument("-m1", "--first", required=True,
                   help="model file or builtin name")
    p.add_argument("-m2", "--second", required=True,
                   help="model file or builtin name")
    p.add_argument("-q", "--query", action="append")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("sample", help="sample labels to CSV")
    p.add_argument("--builtin", required=True, choices=builtin_names())
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("gen", help="sample labels and render images")
    p.add_argument("--builtin", required=True, choices=("backdoor", "frontdoor"))
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("check", help="consistency verdict for a proxy log")
    p.add_argument("--builtin", required=True, choices=builtin_names())
    p.add_argument("--log", required=True, help="JSONL proxy log")
    p.add_argument("--obs", help="label CSV for the reference distribution "
                   "(default: the builtin's exact distribution)")
    p.add_argument("-w", "--care", help="comma-separated care set "
                   "(default: all variables)")
    p.add_argument("--eps", type=str, default="0.02",
                   help="observational TV tolerance")
    p.add_argument("--delta", type=str, default="0.01", help="bound slack")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("models", help="list built-in models")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_models)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EX_USAGE
    except _IoError as e:
        print(f"error: {e}", file=sys.stderr)
        return EX_IOERR
    except (
        DslError,
        EngineError,
        ZeroConditioningError,
        BoundsInputError,
        AnalyticPatternError,
        DatasetError,
        ConsistencyError,
        ValueError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return EX_DATAERR
    except SystemExit as e:  # argparse --version/--help
        code = e.code if isinstance(e.code, int) else 0
        return code
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EX_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
