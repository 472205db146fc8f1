"""Command-line front end.

Exit codes: 0 success, 1 violation / not related / counterexample,
2 usage, parse, gate or link error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import harness, relations
from .languages import GateError, LANG_NAMES, SyntaxErr, lang_key, parse_program, render_program
from .passes import Pass, PassError, full_chain, identity, parse_chain
from .properties import PROPERTIES, check
from .semantics import LinkError, link, run
from .traces import (MODELS, ModelError, Trace, TraceParseError, parse_trace, project_ground,
                     render_trace)

OK, VIOLATED, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _lang(name: str) -> str:
    try:
        return lang_key(name)
    except (KeyError, ValueError):
        raise UsageError(f"unknown language {name!r}") from None


# ------------------------------------------------------------------ compile

def cmd_compile(args) -> int:
    lang = _lang(args.source)
    chain = parse_chain(args.chain)
    lib = parse_program(_read(args.infile), lang)
    if not hasattr(lib, "functions"):
        raise UsageError("compile takes a component library, not a whole program")
    out = chain(lib)
    _write(args.out, render_program(out))
    print(f"{chain.name} : {LANG_NAMES[chain.source]} -> {LANG_NAMES[chain.target]}")
    return OK


# ------------------------------------------------------------------ run

def cmd_run(args) -> int:
    lang = _lang(args.lang)
    # compiled components carry compiler-reserved names
    ctx = parse_program(_read(args.ctx), lang, side="ctx", allow_reserved=True)
    comp = parse_program(_read(args.comp), lang, side="comp", allow_reserved=True)
    if args.fuel <= 0 or args.omega < 0:
        raise UsageError("fuel must be positive and omega non-negative")
    trace, outcome = run(link(ctx, comp, lang), args.fuel, args.omega)
    if args.trace:
        _write(args.trace, render_trace(trace))
    print(outcome)
    return OK


# ------------------------------------------------------------------ check

def _strip_control(text: str) -> str:
    """Drop context lines and control tags so a tagged trace reads as ground."""
    out = []
    for line in text.splitlines():
        parts = line.strip().split(";")
        if "ctx" in parts[1:]:
            continue
        out.append(";".join(p for p in parts if p != "comp"))
    return "\n".join(out)


def load_ground(text: str, model: str = "auto") -> Trace:
    """A ground trace from any trace file: language traces are projected."""
    if model != "auto":
        t = parse_trace(text, model)
        return t if model == "ground" else project_ground(t, independent_low=True)
    for m in ("ground", "ms", "ct", "ghost"):
        try:
            t = parse_trace(text, m)
        except (TraceParseError, ModelError):
            continue
        return t if m == "ground" else project_ground(t, independent_low=True)
    return parse_trace(_strip_control(text), "ground")


def cmd_check(args) -> int:
    trace = load_ground(_read(args.trace), args.model)
    verdict = check(args.prop, trace)
    print(verdict)
    return OK if verdict.ok else VIOLATED


# ------------------------------------------------------------------ relate

def cmd_relate(args) -> int:
    try:
        rels = relations.resolve_chain(args.rel)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    lhs = parse_trace(_read(args.lhs), rels[0].left_model)
    rhs = parse_trace(_read(args.rhs), rels[-1].right_model)
    verdict = relations.relate_chain(rels, lhs, rhs, args.bound)
    print(verdict)
    return OK if verdict.related else VIOLATED


# ------------------------------------------------------------------ fuzz

def _fuzz_pass(name: str) -> Pass:
    if name.startswith("id-"):
        return identity(name[3:])
    if name == "full":
        return full_chain()
    return parse_chain(name)


def cmd_fuzz(args) -> int:
    p = _fuzz_pass(args.pass_name)
    budget = harness.Budget(args.components, args.contexts, args.size, args.fuel,
                            args.omega, harness.default_seed(args.seed))
    extra = None
    if p.target == "ghost":
        extra = harness.barrier_violation
    elif p.target == "scct":
        extra = harness.comp_leak
    secrets = p.target in ("scct", "ghost")
    report = harness.check_rtp(p, args.prop, budget, secrets=secrets, extra=extra)
    print(report.line())
    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    if report.counterexamples:
        print(report.counterexamples[0].render(), file=sys.stderr)
    return OK if report.ok else VIOLATED


# ------------------------------------------------------------------ wf

def cmd_wf(args) -> int:
    try:
        rels = relations.resolve_chain(args.rel)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if len(rels) > 1:
        report = relations.check_prop_translation(rels, args.prop, maxlen=args.maxlen)
        report.chain = args.rel
    else:
        rel = rels[0]
        if rel.name == "scct-spec":
            rel = relations.mk_rel_scct_spec(args.omega)
        report = relations.wf_class(rel, args.prop, maxlen=args.maxlen)
    print(report)
    return OK if report.ok else VIOLATED


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="secomp", description="Secure compilation pipeline tools.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compile", help="run a pass chain over a component")
    c.add_argument("--from", dest="source", required=True, help="source language")
    c.add_argument("--chain", required=True, help="comma-separated pass names or 'full'")
    c.add_argument("--in", dest="infile", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("run", help="link a context and a component and execute")
    r.add_argument("--lang", required=True)
    r.add_argument("--ctx", required=True)
    r.add_argument("--comp", required=True)
    r.add_argument("--fuel", type=int, default=10_000)
    r.add_argument("--omega", type=int, default=3)
    r.add_argument("--trace", help="file receiving the event trace")
    r.set_defaults(func=cmd_run)

    k = sub.add_parser("check", help="check a trace against a property")
    k.add_argument("--prop", required=True, choices=PROPERTIES)
    k.add_argument("--trace", required=True)
    k.add_argument("--model", default="auto", choices=("auto",) + MODELS)
    k.set_defaults(func=cmd_check)

    rl = sub.add_parser("relate", help="decide whether two traces are related")
    rl.add_argument("--rel", required=True)
    rl.add_argument("--lhs", required=True)
    rl.add_argument("--rhs", required=True)
    rl.add_argument("--bound", type=int, default=None,
                    help="intermediate trace length for composed relations")
    rl.set_defaults(func=cmd_relate)

    f = sub.add_parser("fuzz", help="bounded robust preservation check of a pass")
    f.add_argument("--pass", dest="pass_name", required=True)
    f.add_argument("--prop", required=True, choices=PROPERTIES)
    f.add_argument("--components", type=int, default=20)
    f.add_argument("--contexts", type=int, default=10)
    f.add_argument("--size", type=int, default=4)
    f.add_argument("--fuel", type=int, default=10_000)
    f.add_argument("--omega", type=int, default=3)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fuzz)

    w = sub.add_parser("wf", help="well-formedness of a relation, or coherence of a chain")
    w.add_argument("--rel", required=True)
    w.add_argument("--prop", required=True, choices=PROPERTIES)
    w.add_argument("--maxlen", type=int, default=4)
    w.add_argument("--omega", type=int, default=3)
    w.set_defaults(func=cmd_wf)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else USAGE
    try:
        return args.func(args)
    except (UsageError, PassError, SyntaxErr, GateError, LinkError,
            TraceParseError, ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
