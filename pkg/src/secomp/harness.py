"""Random components and attacker contexts, and bounded checks of robust
satisfaction, robust preservation, pass swapping and property translation.

Everything is driven by integer seeds so that every counterexample can be
replayed from its report line.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from . import languages as ast
from .languages import (BinOp, Call, Delete, Expr, Function, Get, HasT, Ifz,
                        IsPoisoned, Let, LetSec, Library, New, Num, Pair, Return, Seq, Set, Var,
                        WrDoit, lang_key)
from .passes import Pass, identity
from .properties import check
from .relations import TraceRelation, mk_equality, mk_rel_scct_spec, related, resolve_chain
from .semantics import LinkError, link, run
from .traces import CRASH, Trace, project_ground


def default_seed(seed: int) -> int:
    env = os.environ.get("SCC_SEED")
    return int(env) if env not in (None, "") else seed


@dataclass(frozen=True)
class Budget:
    components: int = 20
    contexts: int = 10
    size: int = 4
    fuel: int = 10_000
    omega: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("components", "contexts", "size", "fuel"):
            if getattr(self, name) <= 0:
                raise ValueError(f"budget {name} must be positive")
        if self.omega < 0:
            raise ValueError("budget omega must be non-negative")


# ------------------------------------------------------------------ generation

_LEVEL = {"tms": 0, "L": 1, "ms": 1, "scct": 2, "ghost": 3}


class _Gen:
    """Expression generator. ``typed`` keeps L_tms capability discipline;
    otherwise the generator may misuse memory the way an untyped program can."""

    def __init__(self, rng: random.Random, lang: str, side: str, typed: bool,
                 secrets: bool = False):
        self.rng = rng
        self.lang = lang
        self.level = _LEVEL[lang]
        self.side = side
        self.typed = typed
        self.secrets = secrets
        self.fresh = 0
        self.prefix = "v" if side == "comp" else "c"

    def name(self, stem: str) -> str:
        self.fresh += 1
        return f"{stem}{self.prefix}{self.fresh}"

    def leaf(self, vars_: Sequence[str]) -> Expr:
        if vars_ and self.rng.random() < 0.5:
            return Var(self.rng.choice(vars_))
        return Num(self.rng.randint(0, 3))

    def pure(self, d: int, vars_: Sequence[str]) -> Expr:
        """Arithmetic without events: values of stores."""
        if d <= 0 or self.rng.random() < 0.5:
            return self.leaf(vars_)
        op = self.rng.choice("+-*")
        return BinOp(op, self.pure(d - 1, vars_), self.pure(d - 1, vars_))

    def index(self, vars_: Sequence[str], size: int) -> Expr:
        r = self.rng.random()
        if r < 0.6:
            return Num(self.rng.randint(0, max(size - 1, 0)))
        if r < 0.8 or not vars_:
            return Num(self.rng.randint(0, size + 1))  # may run past the end
        return Var(self.rng.choice(vars_))

    def expr(self, d: int, vars_: list, live: dict, fns: Sequence[str],
             may_return: bool = True) -> Expr:
        """A number-valued expression. ``live`` maps pointer names in scope to
        their sizes; the generator never deletes them here."""
        rng = self.rng
        if d <= 0:
            return self.leaf(vars_)
        choices = ["leaf", "binop", "ifz", "let", "seq", "new", "new"]
        if fns:
            choices += ["call", "call"]
        if live:
            choices += ["get", "get", "set", "set"]
        if may_return and not live:
            choices.append("return")
        if not self.typed:
            choices += ["misuse", "misuse"]
            if self.level >= 1:
                choices += ["hast", "pair"]
        if self.level >= 2 and self.side == "ctx":
            choices += ["wrdoit"]
        if self.level >= 2 and self.secrets:
            choices += ["secret"]
        if self.level >= 3 and self.side == "ctx":
            choices.append("barrier")
        pick = rng.choice(choices)
        sub = d - 1
        if pick == "leaf":
            return self.leaf(vars_)
        if pick == "binop":
            op = rng.choice("+-*" * 3 + "/")
            return BinOp(op, self.expr(sub, vars_, live, fns, may_return),
                         self.expr(sub, vars_, live, fns, may_return))
        if pick == "ifz":
            guard = Num(rng.randint(0, 1)) if rng.random() < 0.3 else \
                self.expr(sub, vars_, live, fns, may_return)
            return Ifz(guard, self.expr(sub, vars_, live, fns, may_return),
                       self.expr(sub, vars_, live, fns, may_return))
        if pick == "let":
            x = self.name("x")
            bound = Num(rng.randint(0, 5)) if rng.random() < 0.4 else \
                self.expr(sub, vars_, live, fns, may_return)
            return Let(x, bound, self.expr(sub, vars_ + [x], live, fns, may_return))
        if pick == "seq":
            return Seq(self.expr(sub, vars_, live, fns, may_return),
                       self.expr(sub, vars_, live, fns, may_return))
        if pick == "call":
            return Call(rng.choice(fns), self.expr(sub, vars_, live, fns, may_return))
        if pick == "new":
            return self.block(sub, vars_, live, fns, may_return)
        if pick == "get":
            p = rng.choice(sorted(live))
            return Get(p, self.index(vars_, live[p]))
        if pick == "set":
            p = rng.choice(sorted(live))
            return Set(p, self.index(vars_, live[p]), self.pure(1, vars_))
        if pick == "return":
            return Return(self.expr(sub, vars_, live, fns, may_return))
        if pick == "misuse":
            return self.misuse(sub, vars_, live, fns)
        if pick == "hast":
            ty = rng.choice(ast.TYPE_TAGS)
            target = Var(rng.choice(vars_)) if vars_ else Num(0)
            return HasT(target, ty)
        if pick == "pair":
            return ast.Fst(Pair(self.leaf(vars_), self.leaf(vars_)))
        if pick == "wrdoit":
            return Seq(WrDoit(rng.choice(("on", "off"))), self.expr(sub, vars_, live, fns, may_return))
        if pick == "secret":
            x = self.name("s")
            return LetSec(x, "high", self.leaf(vars_),
                          self.expr(sub, vars_ + [x], live, fns, may_return))
        if pick == "barrier":
            return Seq(ast.Barrier(), self.expr(sub, vars_, live, fns, may_return))
        raise AssertionError(pick)

    def block(self, d, vars_, live, fns, may_return) -> Expr:
        """(new p n (seq BODY (seq (delete p) TAIL))): typed by construction."""
        p = self.name("p")
        size = self.rng.randint(1, 3)
        inner = {**live, p: size}
        body = self.expr(d, vars_, inner, fns, may_return=False)
        init = Set(p, Num(0), self.pure(1, vars_))
        tail = self.expr(max(d - 1, 0), vars_, live, fns, may_return)
        return New(p, Num(size), Seq(init, Seq(body, Seq(Delete(p), tail))))

    def misuse(self, d, vars_, live, fns) -> Expr:
        """Untyped memory patterns: double delete, use after delete, leaks."""
        p = self.name("p")
        size = self.rng.randint(1, 3)
        kind = self.rng.choice(("double", "uaf", "leak", "poisoned"))
        body = self.expr(d, vars_, {**live, p: size}, fns, may_return=False)
        if kind == "double":
            rest = Seq(Delete(p), Delete(p))
        elif kind == "uaf":
            rest = Seq(Delete(p), Get(p, self.index(vars_, size)))
        elif kind == "leak":
            rest = Num(0)
        else:
            rest = Seq(Delete(p), IsPoisoned(p))
        return New(p, Num(size), Seq(body, rest))


def gen_component(seed: int, size: int, lang: str, functions: Optional[int] = None) -> Library:
    """A component library in ``lang``. L_tms components are well typed by
    construction; the others may misuse their own memory. Components only
    call earlier component functions, so every run terminates."""
    if size < 1:
        raise ValueError("size must be at least 1")
    key = lang_key(lang)
    rng = random.Random(f"comp:{seed}:{size}:{key}")
    if size == 1:
        return Library("comp", (Function("f0", "x", Num(0)),), key)
    gen = _Gen(rng, key, "comp", typed=key == "tms")
    count = functions if functions is not None else rng.randint(1, 3)
    funcs = []
    for i in range(count):
        names = [f.name for f in funcs]
        body = gen.expr(size - 1, ["x"], {}, names)
        funcs.append(Function(f"f{i}", "x", body))
    return Library("comp", tuple(funcs), key)


_ARGS_TMS = (Num(0), Num(1), Num(2), Num(5))


def _attack_args(lang: str, secrets: bool) -> tuple:
    args = list(_ARGS_TMS)
    if _LEVEL[lang] >= 1:
        args += [Pair(Num(17), Num(29))]
    return tuple(args)


def _ptr_call(target: str, arg_size: int = 2) -> Expr:
    # hand a fresh context pointer to the component
    return New("q", Num(arg_size), Seq(Set("q", Num(0), Num(7)), Call(target, Var("q"))))


def _secret_call(target: str, n: int) -> Expr:
    return LetSec("k", "high", Num(n), Call(target, Var("k")))


def small_contexts(targets: Sequence[str], lang: str, secrets: bool = False) -> list:
    """Deterministic attacker contexts of size at most three: every target
    called once with each attack argument, then pairs of calls."""
    key = lang_key(lang)
    out = [Num(0)]
    args = _attack_args(key, secrets)
    for t in targets:
        for a in args:
            out.append(Call(t, a))
        if _LEVEL[key] >= 1:
            out.append(_ptr_call(t))
        if secrets and _LEVEL[key] >= 2:
            out.append(_secret_call(t, 3))
    for t in targets:
        for u in targets:
            out.append(Seq(Call(t, Num(1)), Call(u, Num(0))))
    return [Library("ctx", (Function("main", "x", body),), key) for body in out]


def gen_context(seed: int, size: int, lang: str, targets: Sequence[str] = ("f0",),
                secrets: bool = False) -> Library:
    """An attacker context defining ``main``. It may use every feature of
    its language; it never uses reserved fresh-name suffixes."""
    if size < 1:
        raise ValueError("size must be at least 1")
    key = lang_key(lang)
    rng = random.Random(f"ctx:{seed}:{size}:{key}:{','.join(targets)}:{secrets}")
    if size == 1:
        return Library("ctx", (Function("main", "x", Num(0)),), key)
    gen = _Gen(rng, key, "ctx", typed=key == "tms", secrets=secrets)
    helpers = []
    for i in range(rng.randint(0, 1)):
        body = gen.expr(size - 2, ["x"], {}, list(targets))
        helpers.append(Function(f"h{i}", "x", body))
    fns = list(targets) + [h.name for h in helpers]
    calls = []
    for _ in range(rng.randint(1, 3)):
        t = rng.choice(list(targets))
        r = rng.random()
        if _LEVEL[key] >= 1 and r < 0.15:
            calls.append(_ptr_call(t, rng.randint(1, 3)))
        elif _LEVEL[key] >= 1 and r < 0.3:
            calls.append(Call(t, Pair(Num(17), Num(29))))
        elif secrets and _LEVEL[key] >= 2 and r < 0.5:
            calls.append(_secret_call(t, rng.randint(0, 4)))
        else:
            calls.append(Call(t, gen.expr(size - 2, ["x"], {}, fns, may_return=False)))
    body = calls[0]
    for c in calls[1:]:
        body = Seq(body, c)
    if rng.random() < 0.5:
        body = Seq(gen.expr(size - 2, ["x"], {}, fns, may_return=False), body)
    return Library("ctx", tuple(helpers) + (Function("main", "x", body),), key)


def contexts_for(comp: Library, lang: str, count: int, size: int, seed: int,
                 secrets: bool = False) -> list:
    """The first ``count`` contexts: enumerated small ones, then random."""
    targets = comp.names() or ["f0"]
    if not comp.functions:
        return [Library("ctx", (Function("main", "x", Num(0)),), lang_key(lang))][:count]
    out = small_contexts(targets, lang, secrets)[:count]
    i = 0
    while len(out) < count:
        out.append(gen_context(seed * 1000 + i, max(size, 2), lang, targets, secrets))
        i += 1
    return out


# ------------------------------------------------------------------ running

def ground_of(trace: Trace) -> Trace:
    return project_ground(trace, independent_low=True)


def run_pair(ctx: Library, comp: Library, lang: str, fuel: int, omega: int):
    return run(link(ctx, comp, lang), fuel, omega)


@dataclass
class Counterexample:
    component: int
    context: int
    comp: Library
    ctx: Library
    trace: Trace
    index: Optional[int]
    reason: str

    def render(self) -> str:
        return (f"component={self.component} context={self.context} "
                f"index={self.index} reason={self.reason}\n"
                f"-- comp\n{ast.render_program(self.comp)}\n"
                f"-- ctx\n{ast.render_program(self.ctx)}\n"
                f"-- trace\n{self.trace}")


@dataclass
class RobustReport:
    name: str
    prop: str
    budget: Budget
    components: int = 0
    runs: int = 0
    skipped: int = 0
    unrelated: int = 0
    counterexamples: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.counterexamples and not self.unrelated

    def line(self) -> str:
        b = self.budget
        result = "OK" if self.ok else "CEX"
        text = (f"PASS {self.name} prop={self.prop} N={b.components} M={b.contexts} "
                f"result={result} seed={b.seed}")
        if self.counterexamples:
            first = self.counterexamples[0]
            text += f" cex=component:{first.component}/context:{first.context}"
        return text

    def __str__(self):
        return self.line()


def check_rsat(comp: Library, prop: str, budget: Budget, lang: Optional[str] = None,
               contexts: Optional[Sequence[Library]] = None, component_index: int = 0,
               secrets: bool = False, report: Optional[RobustReport] = None) -> RobustReport:
    """Bounded robust satisfaction: run ``comp`` against the budget's
    contexts and check ``prop`` on every projected trace."""
    key = lang_key(lang or comp.lang or "L")
    rep = report or RobustReport("rsat", prop, budget)
    ctxs = contexts if contexts is not None else contexts_for(
        comp, key, budget.contexts, budget.size, budget.seed + component_index, secrets)
    for ci, ctx in enumerate(ctxs):
        trace, _ = run_pair(ctx, comp, key, budget.fuel, budget.omega)
        rep.runs += 1
        v = check(prop, ground_of(trace))
        if not v.ok:
            rep.counterexamples.append(
                Counterexample(component_index, ci, comp, ctx, trace, v.index, v.reason))
            break
    if report is None:
        rep.components = 1
    return rep


def _relation_for(p: Pass, omega: int) -> Optional[TraceRelation]:
    if p.relation == "eq":
        return mk_equality(ast.TRACE_MODEL[p.target])
    rels = resolve_chain(p.relation)
    if len(rels) != 1:
        return None  # composed relations are only checked by the bounded tools
    if rels[0].name == "scct-spec":
        return mk_rel_scct_spec(omega)
    return rels[0]


SourceFactory = Callable[[int, Budget], Library]


def _default_source(p: Pass) -> SourceFactory:
    return lambda i, b: gen_component(b.seed * 100_003 + i, b.size, p.source)


def check_rtp(p: Pass, prop: str, budget: Budget, sources: Optional[SourceFactory] = None,
              secrets: bool = False, relate: bool = True,
              extra: Optional[Callable[[Trace], Optional[str]]] = None) -> RobustReport:
    """Bounded robust preservation of ``prop`` by pass ``p``.

    Source components that robustly satisfy ``prop`` (on the budget's
    source-language contexts) are compiled and must robustly satisfy it
    against target-language contexts. Paired runs under the same source
    context must be related by the pass relation. ``extra`` is an optional
    per-target-trace check returning a failure reason.
    """
    rep = RobustReport(p.name, prop, budget)
    make = sources or _default_source(p)
    relation = _relation_for(p, budget.omega) if relate else None
    if relate and relation is None:
        rep.notes.append(f"paired traces not related: {p.relation} is a composition")
    for i in range(budget.components):
        comp = make(i, budget)
        rep.components += 1
        src_ctxs = contexts_for(comp, p.source, budget.contexts, budget.size,
                                budget.seed + i, secrets)
        src_traces = []
        violated = False
        for ctx in src_ctxs:
            trace, _ = run_pair(ctx, comp, p.source, budget.fuel, budget.omega)
            src_traces.append(trace)
            if not check(prop, ground_of(trace)).ok:
                violated = True
        if violated:
            rep.skipped += 1
            continue
        target = p(comp)
        # attackers at the target level
        tgt_ctxs = contexts_for(target, p.target, budget.contexts, budget.size,
                                budget.seed + i, secrets)
        for ci, ctx in enumerate(tgt_ctxs):
            trace, _ = run_pair(ctx, target, p.target, budget.fuel, budget.omega)
            rep.runs += 1
            v = check(prop, ground_of(trace))
            why = None if v.ok else v.reason
            if why is None and extra is not None:
                why = extra(trace)
            if why is not None:
                rep.counterexamples.append(
                    Counterexample(i, ci, target, ctx, trace, v.index, why))
                break
        if relation is None:
            continue
        for ci, (ctx, s_trace) in enumerate(zip(src_ctxs, src_traces)):
            t_ctx = ctx.with_lang(p.target)
            t_trace, _ = run_pair(t_ctx, target, p.target, budget.fuel, budget.omega)
            if not related(relation, s_trace, t_trace, crash_prefix=True):
                rep.unrelated += 1
                rep.counterexamples.append(Counterexample(
                    i, ci, target, ctx, t_trace, None,
                    f"not related by {relation.name}: source {s_trace}"))
                break
    return rep


def run_normalized(ctx: Library, comp: Library, lang: str, budget: Budget) -> tuple:
    trace, outcome = run_pair(ctx, comp, lang, budget.fuel, budget.omega)
    return tuple(e for e in trace.events if e.kind != "Empty"), str(outcome)


@dataclass
class SwapReport:
    name: str
    budget: Budget
    programs: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def line(self) -> str:
        b = self.budget
        return (f"SWAP {self.name} N={b.components} M={b.contexts} "
                f"result={'OK' if self.ok else 'CEX'} seed={b.seed}"
                + (f" cex={self.mismatches[0][0]}" if self.mismatches else ""))


def check_swap(p1: Pass, p2: Pass, budget: Budget, sources: Optional[SourceFactory] = None,
               transparent: bool = True) -> SwapReport:
    """Both composition orders give the same traces; with ``transparent``
    each pass alone must also leave the traces of the original unchanged."""
    if p1.source != p1.target or p2.source != p2.target or p1.source != p2.source:
        raise ValueError("swapping needs two passes on one language")
    lang = p1.source
    rep = SwapReport(f"{p1.name},{p2.name}", budget)
    make = sources or (lambda i, b: gen_component(b.seed * 100_003 + i, b.size, lang))
    for i in range(budget.components):
        comp = make(i, budget)
        rep.programs += 1
        a = p2(p1(comp))
        b = p1(p2(comp))
        variants = {"p1;p2": a, "p2;p1": b}
        if transparent:
            variants.update({p1.name: p1(comp), p2.name: p2(comp)})
        for ci, ctx in enumerate(contexts_for(comp, lang, budget.contexts, budget.size,
                                              budget.seed + i)):
            want = run_normalized(ctx, comp, lang, budget)
            got = {k: run_normalized(ctx, v, lang, budget) for k, v in variants.items()}
            ref = got["p1;p2"]
            for k, g in got.items():
                if g != ref or (transparent and g != want):
                    rep.mismatches.append((f"component:{i}/context:{ci}/{k}", comp, ctx))
                    break
            else:
                continue
            break
    return rep


def swap_identity(lang: str, budget: Budget) -> SwapReport:
    i = identity(lang)
    return check_swap(i, i, budget)


# ------------------------------------------------------------------ speculation helpers

def barrier_violation(trace: Trace) -> Optional[str]:
    """Every component Branch or Spec must be followed, before any other
    event, by a Barrier (or by Rlb when the window is already exhausted)."""
    evs = trace.events
    for k, e in enumerate(evs):
        if e.ctl != "comp" or e.kind not in ("Branch", "Spec"):
            continue
        j = k + 1
        while j < len(evs) and evs[j].kind == "Spec":
            j += 1
        if j >= len(evs):
            continue
        nxt = evs[j]
        if nxt.kind == "Barrier" or nxt.kind == "Rlb" or nxt.kind == CRASH:
            continue
        if e.kind == "Branch" and not any(x.kind == "Spec" for x in evs[k + 1:j]):
            # a Branch inside someone else's window: its arm still starts
            # with a barrier, which shows up as the next event or not at all
            if nxt.kind == "Barrier":
                continue
        return f"{e} at {k} is followed by {nxt} without a barrier"
    return None


def comp_leak(trace: Trace) -> Optional[str]:
    """Constant-time discipline of compiled components: no Branch/Binop and
    no high-tagged Get/Set from the component."""
    for k, e in enumerate(trace.events):
        if e.ctl != "comp":
            continue
        if e.kind in ("Branch", "Binop"):
            return f"component emits {e} at {k}"
        if e.kind in ("Get", "Set") and e.is_secret:
            return f"component emits secret-tagged {e} at {k}"
    return None


def iter_runs(comps: Iterable[Library], lang: str, budget: Budget, secrets: bool = False):
    """(component index, context index, ctx, comp, trace, outcome) for every run."""
    for i, comp in enumerate(comps):
        for ci, ctx in enumerate(contexts_for(comp, lang, budget.contexts, budget.size,
                                              budget.seed + i, secrets)):
            trace, outcome = run_pair(ctx, comp, lang, budget.fuel, budget.omega)
            yield i, ci, ctx, comp, trace, outcome


def replay(cex: Counterexample, lang: str, budget: Budget) -> Trace:
    trace, _ = run_pair(cex.ctx, cex.comp, lang, budget.fuel, budget.omega)
    return trace


def reproduce(p: Pass, budget: Budget, component: int, context: int,
              secrets: bool = False, sources: Optional[SourceFactory] = None) -> Trace:
    """Rebuild a check_rtp target run from the seed and indices alone."""
    comp = p((sources or _default_source(p))(component, budget))
    ctx = contexts_for(comp, p.target, budget.contexts, budget.size,
                       budget.seed + component, secrets)[context]
    trace, _ = run_pair(ctx, comp, p.target, budget.fuel, budget.omega)
    return trace


# ------------------------------------------------------------------ strncpy scenario

def strncpy_source(active: bool, size: int = 12) -> tuple:
    """Context and component text for the copy-loop example: the component
    copies ``x`` into ``y`` through secret-tagged aliases, one unrolled
    iteration per cell, reads one cell past the end of ``x``, frees ``y``
    and then reads it again."""
    def loop(i: int) -> str:
        if i > size:
            return "0"
        guard = f"(+ (get xs {i}) (- (+ {i} 1) n))"
        return f"(ifz {guard} (seq (set ys {i} (get xs {i})) {loop(i + 1)}) 0)"
    mode = "on" if active else "off"
    comp = (f"(fun strncpy (n)\n  (seq (wrdoit {mode})\n"
            f"    (new x {size} (new y {size}\n"
            f"      (let-sec xs high x (let-sec ys high y\n"
            f"        (seq {loop(0)}\n"
            f"          (seq (delete ys) (get ys 6)))))))))\n")
    ctx = f"(fun main (z) (call strncpy {size}))\n"
    return ctx, comp


def strncpy_trace(active: bool, size: int = 12, omega: int = 3) -> Trace:
    ctx_text, comp_text = strncpy_source(active, size)
    ctx = ast.parse_program(ctx_text, "scct", side="ctx")
    comp = ast.parse_program(comp_text, "scct")
    trace, _ = run(link(ctx, comp, "scct"), 100_000, omega)
    return trace


__all__ = [
    "Budget", "RobustReport", "SwapReport", "Counterexample", "gen_component", "gen_context",
    "small_contexts", "contexts_for", "check_rsat", "check_rtp", "check_swap",
    "barrier_violation", "comp_leak", "iter_runs", "replay", "reproduce", "ground_of", "default_seed",
    "LinkError", "strncpy_source", "strncpy_trace",
]
