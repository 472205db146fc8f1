"""The six compiler passes and the ways of composing them.

Passes rewrite only the component library; the context is the attacker
and is never compiled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from . import languages as ast
from .languages import (Abort, Barrier, BinOp, Call, Expr, Function, HasT, Ifz, Let,
                        Library, Num, Seq, Var, WrDoit, LANG_NAMES, check_gate,
                        lang_key, reserved_names)


class PassError(ValueError):
    pass


@dataclass(frozen=True)
class Pass:
    name: str
    source: str
    target: str
    transform: Callable[[Library], Library]
    relation: str

    def __call__(self, lib: Library) -> Library:
        if lib.side != "comp":
            raise PassError(f"{self.name} compiles components only")
        if lib.lang is not None and lib.lang != self.source and not (
                {lib.lang, self.source} <= {"L", "ms"}):
            raise PassError(f"{self.name} expects {LANG_NAMES[self.source]} input, "
                            f"got {LANG_NAMES[lib.lang]}")
        check_gate(lib, self.source)
        out = self.transform(lib)
        return out.with_lang(self.target)


def map_expr(e: Expr, fn: Callable[[Expr], Expr]) -> Expr:
    """Rebuild ``e`` bottom-up, applying ``fn`` to every rebuilt node."""
    t = type(e)
    if t in (ast.Num, ast.Var, ast.Delete, ast.Abort, ast.IsPoisoned, ast.WrDoit, ast.Barrier):
        return fn(e)
    if t in (ast.Fst, ast.Snd, ast.Return):
        return fn(t(map_expr(e.e, fn)))
    if t is ast.HasT:
        return fn(HasT(map_expr(e.e, fn), e.ty))
    if t is ast.Pair:
        return fn(ast.Pair(map_expr(e.left, fn), map_expr(e.right, fn)))
    if t is ast.BinOp:
        return fn(BinOp(e.op, map_expr(e.left, fn), map_expr(e.right, fn)))
    if t is ast.Ifz:
        return fn(Ifz(map_expr(e.cond, fn), map_expr(e.then, fn), map_expr(e.orelse, fn)))
    if t is ast.Let:
        return fn(Let(e.name, map_expr(e.bound, fn), map_expr(e.body, fn)))
    if t is ast.LetSec:
        return fn(ast.LetSec(e.name, e.sec, map_expr(e.bound, fn), map_expr(e.body, fn)))
    if t is ast.New:
        return fn(ast.New(e.name, map_expr(e.size, fn), map_expr(e.body, fn)))
    if t is ast.Get:
        return fn(ast.Get(e.name, map_expr(e.index, fn)))
    if t is ast.Set:
        return fn(ast.Set(e.name, map_expr(e.index, fn), map_expr(e.value, fn)))
    if t is ast.Call:
        return fn(Call(e.fn, map_expr(e.arg, fn)))
    if t is ast.RdDoit:
        return fn(ast.RdDoit(e.name, map_expr(e.body, fn)))
    if t is ast.Seq:
        return fn(Seq(map_expr(e.first, fn), map_expr(e.second, fn)))
    raise TypeError(f"not an expression: {e!r}")


def _bodies(lib: Library, fn: Callable[[Function], Expr]) -> Library:
    return Library(lib.side, tuple(Function(f.name, f.param, fn(f)) for f in lib.functions),
                   lib.lang)


# ------------------------------------------------------------ L_tms -> L

def _tms_trg(lib: Library) -> Library:
    return _bodies(lib, lambda f: Ifz(HasT(Var(f.param), "nat"), f.body, Abort()))


# ------------------------------------------------------------ L -> L_ms

def size_name(x: str) -> str:
    return f"{x}%size"


def idx_name(x: str) -> str:
    return f"{x}%idx"


def in_range(x: str) -> Expr:
    """Zero exactly when ``x%idx < x%size`` (subtraction saturates at 0)."""
    return BinOp("-", BinOp("+", Var(idx_name(x)), Num(1)), Var(size_name(x)))


def _bounds(e: Expr, ptrs: frozenset) -> Expr:
    t = type(e)
    if t is ast.New:
        size = _bounds(e.size, ptrs)
        body = _bounds(e.body, ptrs | {e.name})
        return Let(size_name(e.name), size, ast.New(e.name, Var(size_name(e.name)), body))
    if t is ast.Get:
        idx = _bounds(e.index, ptrs)
        if e.name not in ptrs:
            # no allocation in scope: the bound is unknown, refuse the access
            return Let(idx_name(e.name), idx, Abort())
        access = ast.Get(e.name, Var(idx_name(e.name)))
        return Let(idx_name(e.name), idx, Ifz(in_range(e.name), access, Abort()))
    if t is ast.Set:
        idx = _bounds(e.index, ptrs)
        value = _bounds(e.value, ptrs)
        if e.name not in ptrs:
            return Let(idx_name(e.name), idx, Abort())
        access = ast.Set(e.name, Var(idx_name(e.name)), value)
        return Let(idx_name(e.name), idx, Ifz(in_range(e.name), access, Abort()))
    if t in (ast.Let, ast.LetSec):
        inner = ptrs - {e.name}
        bound = _bounds(e.bound, ptrs)
        if t is ast.Let:
            return Let(e.name, bound, _bounds(e.body, inner))
        return ast.LetSec(e.name, e.sec, bound, _bounds(e.body, inner))
    if t is ast.RdDoit:
        return ast.RdDoit(e.name, _bounds(e.body, ptrs - {e.name}))
    # every other node: rebuild with the same pointer scope
    kids = ast.children(e)
    if not kids:
        return e
    return _rebuild(e, [_bounds(k, ptrs) for k in kids])


def _rebuild(e: Expr, kids: Sequence[Expr]) -> Expr:
    t = type(e)
    if t in (ast.Fst, ast.Snd, ast.Return):
        return t(kids[0])
    if t is ast.HasT:
        return HasT(kids[0], e.ty)
    if t is ast.Pair:
        return ast.Pair(*kids)
    if t is ast.BinOp:
        return BinOp(e.op, *kids)
    if t is ast.Ifz:
        return Ifz(*kids)
    if t is ast.Call:
        return Call(e.fn, kids[0])
    if t is ast.Seq:
        return Seq(*kids)
    raise TypeError(f"cannot rebuild {e!r}")


def _trg_ms(lib: Library) -> Library:
    bad = reserved_names(lib)
    if bad:
        raise PassError(f"identifiers use a reserved compiler suffix: {', '.join(sorted(set(bad)))}")
    return _bodies(lib, lambda f: _bounds(f.body, frozenset()))


# ------------------------------------------------------------ optimisations

def _dce(e: Expr) -> Expr:
    def rw(node):
        if type(node) is Ifz and type(node.cond) is Num:
            return node.then if node.cond.n == 0 else node.orelse
        return node
    return map_expr(e, rw)


def fold(op: str, a: int, b: int):
    if op == "+":
        return a + b
    if op == "-":
        return max(a - b, 0)
    if op == "*":
        return a * b
    if b == 0:
        return None  # left for the runtime to fault on
    return a // b


def mix(e: Expr, acc: dict) -> Expr:
    """Constant folding with a substitution accumulator."""
    t = type(e)
    if t is Var:
        return Num(acc[e.name]) if e.name in acc else e
    if t is BinOp:
        a, b = mix(e.left, acc), mix(e.right, acc)
        if type(a) is Num and type(b) is Num:
            k = fold(e.op, a.n, b.n)
            if k is not None:
                return Num(k)
        return BinOp(e.op, a, b)
    if t is Let:
        bound = mix(e.bound, acc)
        if type(bound) is Num:
            return mix(e.body, {**acc, e.name: bound.n})
        return Let(e.name, bound, mix(e.body, _without(acc, e.name)))
    if t is ast.LetSec:
        return ast.LetSec(e.name, e.sec, mix(e.bound, acc), mix(e.body, _without(acc, e.name)))
    if t is ast.New:
        return ast.New(e.name, mix(e.size, acc), mix(e.body, _without(acc, e.name)))
    if t is ast.RdDoit:
        return ast.RdDoit(e.name, mix(e.body, _without(acc, e.name)))
    kids = ast.children(e)
    if not kids:
        return e
    if t is ast.Get:
        return ast.Get(e.name, mix(e.index, acc))
    if t is ast.Set:
        return ast.Set(e.name, mix(e.index, acc), mix(e.value, acc))
    return _rebuild(e, [mix(k, acc) for k in kids])


def _without(acc: dict, name: str) -> dict:
    if name not in acc:
        return acc
    return {k: v for k, v in acc.items() if k != name}


# ------------------------------------------------------------ L_ms -> L_scct

ARG_NAME = "arg%idx"


def _ct_calls(e: Expr) -> Expr:
    def rw(node):
        if type(node) is Call:
            # re-enable the mode once the argument is computed, keep its value
            arg = Let(ARG_NAME, node.arg, Seq(WrDoit("on"), Var(ARG_NAME)))
            return Call(node.fn, arg)
        return node
    return map_expr(e, rw)


def _ms_scct(lib: Library) -> Library:
    return _bodies(lib, lambda f: Seq(WrDoit("on"), _ct_calls(f.body)))


# ------------------------------------------------------------ L_scct -> L_ghost

def _barriers(e: Expr) -> Expr:
    def rw(node):
        if type(node) is Ifz:
            return Ifz(node.cond, Seq(Barrier(), node.then), Seq(Barrier(), node.orelse))
        return node
    return map_expr(e, rw)


# ------------------------------------------------------------ registry

def _on_bodies(fn):
    return lambda lib: _bodies(lib, lambda f: fn(f.body))


cc_tms_trg = Pass("tms-trg", "tms", "L", _tms_trg, "tms-trg")
cc_trg_ms = Pass("trg-ms", "L", "ms", _trg_ms, "trg-ms")
cc_dce = Pass("dce", "ms", "ms", _on_bodies(_dce), "eq")
cc_cf = Pass("cf", "ms", "ms", _on_bodies(lambda b: mix(b, {})), "eq")
cc_ms_scct = Pass("ms-scct", "ms", "scct", _ms_scct, "ms-scct")
cc_scct_spec = Pass("scct-spec", "scct", "ghost", _on_bodies(_barriers), "scct-spec")

PASSES = {p.name: p for p in (cc_tms_trg, cc_trg_ms, cc_cf, cc_dce, cc_ms_scct, cc_scct_spec)}


def identity(lang: str) -> Pass:
    key = lang_key(lang)
    return Pass(f"id-{key}", key, key, lambda lib: lib, "eq")


def _compatible(target: str, source: str) -> bool:
    # L and L_ms are the same language under two names
    return target == source or {target, source} == {"L", "ms"}


def seq_compose(p1: Pass, p2: Pass) -> Pass:
    """Run ``p1`` then ``p2``."""
    if not _compatible(p1.target, p2.source):
        raise PassError(f"language mismatch: {p1.name} produces {LANG_NAMES[p1.target]} "
                        f"but {p2.name} expects {LANG_NAMES[p2.source]}")
    relation = ".".join(r for r in (p1.relation, p2.relation) if r != "eq") or "eq"
    return Pass(f"{p1.name},{p2.name}", p1.source, p2.target,
                lambda lib: p2.transform(p1.transform(lib).with_lang(p1.target)), relation)


def chain(passes: Sequence[Pass]) -> Pass:
    if not passes:
        raise PassError("empty pass chain")
    out = passes[0]
    for p in passes[1:]:
        out = seq_compose(out, p)
    return out


def upper_compose(pa: Pass, pb: Pass) -> Callable[[Library], Library]:
    """One compiler for two source languages sharing a target."""
    if not _compatible(pa.target, pb.target):
        raise PassError("upper composition needs a shared target language")

    def compile_(lib: Library) -> Library:
        for p in (pa, pb):
            if lib.lang == p.source:
                return p(lib)
        shown = LANG_NAMES.get(lib.lang, str(lib.lang))
        raise PassError(f"no pass accepts {shown} input")
    return compile_


def lower_compose(pa: Pass, pb: Pass) -> Callable[[Library, str], Library]:
    """One compiler for a shared source language, choosing the target."""
    if not _compatible(pa.source, pb.source):
        raise PassError("lower composition needs a shared source language")

    def compile_(lib: Library, target: str) -> Library:
        key = lang_key(target)
        for p in (pa, pb):
            if p.target == key:
                return p(lib)
        raise PassError(f"unknown target {target!r}")
    return compile_


def fixpoint(p: Pass, limit: int = 64) -> Pass:
    """Repeat a same-language pass until the library stops changing."""
    if p.source != p.target:
        raise PassError("only a same-language pass can be iterated")

    def go(lib: Library) -> Library:
        for _ in range(limit):
            nxt = p.transform(lib).with_lang(p.target)
            if nxt == lib:
                break
            lib = nxt
        return lib
    return Pass(f"({p.name})*", p.source, p.target, go, p.relation)


def full_chain(order: Sequence[str] = ("cf", "dce")) -> Pass:
    """The whole pipeline; the optimisations run to a fixpoint so that both
    orders reach the same code."""
    if sorted(order) != ["cf", "dce"]:
        raise PassError("the optimisation order must be a permutation of cf and dce")
    opt = fixpoint(chain([PASSES[n] for n in order]))
    p = chain([PASSES["tms-trg"], PASSES["trg-ms"], opt, PASSES["ms-scct"], PASSES["scct-spec"]])
    return Pass("full", p.source, p.target, p.transform, p.relation)


def parse_chain(spec: str) -> Pass:
    """``full`` or a comma-separated list of pass names."""
    names = [n.strip() for n in spec.split(",") if n.strip()]
    if not names:
        raise PassError("empty pass chain")
    parts = []
    for n in names:
        if n == "full":
            parts.append(full_chain())
        elif n in PASSES:
            parts.append(PASSES[n])
        else:
            raise PassError(f"unknown pass {n!r}")
    return chain(parts)
