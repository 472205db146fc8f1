"""Abstract syntax shared by the five object languages, their feature gates,
the s-expression concrete syntax and the linear type system of L_tms."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Optional, Union

# language keys, from most to least restricted
LANGS = ("tms", "L", "ms", "scct", "ghost")
LANG_NAMES = {"tms": "L_tms", "L": "L", "ms": "L_ms", "scct": "L_scct", "ghost": "L_ghost"}
_ALIASES = {
    "tms": "tms", "l_tms": "tms", "ltms": "tms",
    "l": "L", "trg": "L",
    "ms": "ms", "l_ms": "ms", "lms": "ms",
    "scct": "scct", "l_scct": "scct", "lscct": "scct",
    "ghost": "ghost", "spec": "ghost", "l_ghost": "ghost", "lghost": "ghost",
}
TRACE_MODEL = {"tms": "ms", "L": "ms", "ms": "ms", "scct": "ct", "ghost": "ghost"}
_LEVEL = {"tms": 0, "L": 1, "ms": 1, "scct": 2, "ghost": 3}

RESERVED_SUFFIXES = ("%size", "%idx")
TYPE_TAGS = ("nat", "pair", "ptr")
BINOPS = ("+", "-", "*", "/")


def lang_key(name: str) -> str:
    key = _ALIASES.get(name.strip().lower())
    if key is None:
        raise ValueError(f"unknown language {name!r}")
    return key


# ---------------------------------------------------------------- AST nodes

@dataclass(frozen=True)
class Num:
    n: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Pair:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Fst:
    e: "Expr"


@dataclass(frozen=True)
class Snd:
    e: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Ifz:
    cond: "Expr"
    then: "Expr"
    orelse: "Expr"


@dataclass(frozen=True)
class Let:
    name: str
    bound: "Expr"
    body: "Expr"


@dataclass(frozen=True)
class New:
    name: str
    size: "Expr"
    body: "Expr"


@dataclass(frozen=True)
class Delete:
    name: str


@dataclass(frozen=True)
class Get:
    name: str
    index: "Expr"


@dataclass(frozen=True)
class Set:
    name: str
    index: "Expr"
    value: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


@dataclass(frozen=True)
class Return:
    e: "Expr"


@dataclass(frozen=True)
class Abort:
    pass


@dataclass(frozen=True)
class HasT:
    e: "Expr"
    ty: str


@dataclass(frozen=True)
class IsPoisoned:
    name: str


@dataclass(frozen=True)
class WrDoit:
    mode: str  # "on" | "off"


@dataclass(frozen=True)
class RdDoit:
    name: str
    body: "Expr"


@dataclass(frozen=True)
class LetSec:
    name: str
    sec: str  # "low" | "high"
    bound: "Expr"
    body: "Expr"


@dataclass(frozen=True)
class Barrier:
    pass


@dataclass(frozen=True)
class Seq:
    first: "Expr"
    second: "Expr"


Expr = Union[Num, Var, Pair, Fst, Snd, BinOp, Ifz, Let, New, Delete, Get, Set, Call,
             Return, Abort, HasT, IsPoisoned, WrDoit, RdDoit, LetSec, Barrier, Seq]


@dataclass(frozen=True)
class Function:
    name: str
    param: str
    body: Expr
    annotated: bool = False  # written as (x : nat)


@dataclass(frozen=True)
class Library:
    side: str  # "ctx" | "comp"
    functions: tuple = ()
    lang: Optional[str] = None  # set by the parser and by passes

    def __post_init__(self):
        if self.side not in ("ctx", "comp"):
            raise ValueError(f"library side must be ctx or comp, not {self.side!r}")
        if not isinstance(self.functions, tuple):
            object.__setattr__(self, "functions", tuple(self.functions))
        names = [f.name for f in self.functions]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ValueError(f"duplicate function names: {', '.join(sorted(dup))}")

    def names(self) -> list:
        return [f.name for f in self.functions]

    def lookup(self, name: str) -> Optional[Function]:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def map_bodies(self, fn) -> "Library":
        return Library(self.side, tuple(fn(f) for f in self.functions), self.lang)

    def with_lang(self, lang: Optional[str]) -> "Library":
        return Library(self.side, self.functions, lang)


@dataclass(frozen=True)
class Program:
    lang: str
    ctx: Library
    comp: Library


# ------------------------------------------------------------ AST utilities

def children(e: Expr) -> tuple:
    if isinstance(e, (Num, Var, Delete, Abort, IsPoisoned, WrDoit, Barrier)):
        return ()
    if isinstance(e, (Fst, Snd, Return)):
        return (e.e,)
    if isinstance(e, HasT):
        return (e.e,)
    if isinstance(e, (Pair, BinOp)):
        return (e.left, e.right)
    if isinstance(e, Ifz):
        return (e.cond, e.then, e.orelse)
    if isinstance(e, (Let, LetSec)):
        return (e.bound, e.body)
    if isinstance(e, New):
        return (e.size, e.body)
    if isinstance(e, Get):
        return (e.index,)
    if isinstance(e, Set):
        return (e.index, e.value)
    if isinstance(e, Call):
        return (e.arg,)
    if isinstance(e, RdDoit):
        return (e.body,)
    if isinstance(e, Seq):
        return (e.first, e.second)
    raise TypeError(f"not an expression: {e!r}")


def walk(e: Expr) -> Iterator[Expr]:
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def size(e: Expr) -> int:
    return sum(1 for _ in walk(e))


def bound_names(e: Expr) -> Iterator[str]:
    """Every identifier written in ``e`` (binders, uses and name slots)."""
    for node in walk(e):
        for attr in ("name",):
            v = getattr(node, attr, None)
            if isinstance(v, str):
                yield v
        if isinstance(node, Call):
            yield node.fn


# -------------------------------------------------------------- feature gates

class GateError(ValueError):
    """A construct is used outside the languages that provide it."""


_FIRST_LEVEL = {
    Pair: 1, Fst: 1, Snd: 1, HasT: 1, IsPoisoned: 1,
    WrDoit: 2, RdDoit: 2, LetSec: 2,
    Barrier: 3,
}
_CONSTRUCT_NAMES = {
    Pair: "pair", Fst: "fst", Snd: "snd", HasT: "hast", IsPoisoned: "ispoisoned",
    WrDoit: "wrdoit", RdDoit: "rddoit", LetSec: "let-sec", Barrier: "barrier",
}


def gate_error(e: Expr, lang: str) -> Optional[str]:
    level = _LEVEL[lang]
    for node in walk(e):
        need = _FIRST_LEVEL.get(type(node), 0)
        if need > level:
            return f"{_CONSTRUCT_NAMES[type(node)]} is not available in {LANG_NAMES[lang]}"
    return None


def check_gate(item: Union[Expr, Function, Library, Program], lang: str) -> None:
    lang = lang_key(lang)
    if isinstance(item, Program):
        check_gate(item.ctx, lang)
        check_gate(item.comp, lang)
        return
    if isinstance(item, Library):
        for f in item.functions:
            check_gate(f, lang)
        return
    if isinstance(item, Function):
        err = gate_error(item.body, lang)
        if err:
            raise GateError(f"function {item.name}: {err}")
        return
    err = gate_error(item, lang)
    if err:
        raise GateError(err)


def reserved_names(lib: Library) -> list:
    found = []
    for f in lib.functions:
        for name in [f.name, f.param, *bound_names(f.body)]:
            if any(name.endswith(s) or s in name for s in RESERVED_SUFFIXES):
                found.append(name)
    return found


# ------------------------------------------------------------------- reader

class SyntaxErr(ValueError):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


_TOKEN = re.compile(r"\s+|;[^\n]*|(\()|(\))|([^\s()]+)")
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_%'\-]*$")


@dataclass
class _Tok:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # pragma: no cover - the pattern matches any char
            raise SyntaxErr(line, pos - line_start + 1, "unexpected character")
        chunk = m.group(0)
        if m.lastindex:
            toks.append(_Tok(chunk, line, pos - line_start + 1))
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    return toks


def _read(toks: list, i: int):
    """Read one datum; lists are (items, tok) pairs, atoms are tokens."""
    if i >= len(toks):
        last = toks[-1] if toks else _Tok("", 1, 1)
        raise SyntaxErr(last.line, last.col, "unexpected end of input")
    tok = toks[i]
    if tok.text == ")":
        raise SyntaxErr(tok.line, tok.col, "unexpected ')'")
    if tok.text != "(":
        return tok, i + 1
    items = []
    i += 1
    while True:
        if i >= len(toks):
            raise SyntaxErr(tok.line, tok.col, "unclosed '('")
        if toks[i].text == ")":
            return (items, tok), i + 1
        item, i = _read(toks, i)
        items.append(item)


def _pos(d):
    tok = d[1] if isinstance(d, tuple) else d
    return tok.line, tok.col


def _fail(d, message: str):
    line, col = _pos(d)
    raise SyntaxErr(line, col, message)


def _atom(d, what: str) -> str:
    if isinstance(d, tuple):
        _fail(d, f"expected {what}, found a list")
    return d.text


def _name(d, allow_reserved: bool) -> str:
    text = _atom(d, "a name")
    if not _NAME.match(text):
        _fail(d, f"invalid name {text!r}")
    if not allow_reserved and any(s in text for s in RESERVED_SUFFIXES):
        _fail(d, f"name {text!r} uses a reserved compiler suffix")
    return text


def _expr(d, allow_reserved: bool) -> Expr:
    if not isinstance(d, tuple):
        text = d.text
        if text.isdigit():
            return Num(int(text))
        return Var(_name(d, allow_reserved))
    items, _ = d
    if not items:
        _fail(d, "empty expression")
    head = items[0]
    if isinstance(head, tuple):
        _fail(head, "expected an operator")
    op = head.text
    args = items[1:]

    def arity(n):
        if len(args) != n:
            _fail(d, f"{op} takes {n} argument{'s' if n != 1 else ''}, got {len(args)}")

    E = lambda x: _expr(x, allow_reserved)  # noqa: E731
    N = lambda x: _name(x, allow_reserved)  # noqa: E731
    if op in BINOPS:
        arity(2)
        return BinOp(op, E(args[0]), E(args[1]))
    if op == "pair":
        arity(2)
        return Pair(E(args[0]), E(args[1]))
    if op in ("fst", "snd", "return"):
        arity(1)
        return {"fst": Fst, "snd": Snd, "return": Return}[op](E(args[0]))
    if op == "ifz":
        arity(3)
        return Ifz(E(args[0]), E(args[1]), E(args[2]))
    if op in ("let", "new"):
        arity(3)
        return (Let if op == "let" else New)(N(args[0]), E(args[1]), E(args[2]))
    if op in ("delete", "ispoisoned"):
        arity(1)
        return (Delete if op == "delete" else IsPoisoned)(N(args[0]))
    if op == "get":
        arity(2)
        return Get(N(args[0]), E(args[1]))
    if op == "set":
        arity(3)
        return Set(N(args[0]), E(args[1]), E(args[2]))
    if op == "call":
        arity(2)
        return Call(N(args[0]), E(args[1]))
    if op in ("abort", "barrier"):
        arity(0)
        return Abort() if op == "abort" else Barrier()
    if op == "hast":
        arity(2)
        ty = _atom(args[1], "a type tag")
        if ty not in TYPE_TAGS:
            _fail(args[1], f"unknown type tag {ty!r}")
        return HasT(E(args[0]), ty)
    if op == "wrdoit":
        arity(1)
        mode = _atom(args[0], "on or off")
        if mode not in ("on", "off"):
            _fail(args[0], "wrdoit takes on or off")
        return WrDoit(mode)
    if op == "rddoit":
        arity(2)
        return RdDoit(N(args[0]), E(args[1]))
    if op == "let-sec":
        arity(4)
        sec = _atom(args[1], "low or high")
        if sec not in ("low", "high"):
            _fail(args[1], "let-sec takes low or high")
        return LetSec(N(args[0]), sec, E(args[2]), E(args[3]))
    if op == "seq":
        arity(2)
        return Seq(E(args[0]), E(args[1]))
    _fail(head, f"unknown form {op!r}")


def _function(d, allow_reserved: bool) -> Function:
    if not isinstance(d, tuple) or not d[0] or _atom(d[0][0], "fun") != "fun":
        _fail(d, "expected (fun NAME (PARAM) EXPR)")
    items, _ = d
    if len(items) != 4:
        _fail(d, "fun takes a name, a parameter list and a body")
    name = _name(items[1], allow_reserved)
    params = items[2]
    if not isinstance(params, tuple):
        _fail(params, "expected a parameter list")
    plist = params[0]
    annotated = False
    if len(plist) == 3 and not isinstance(plist[1], tuple) and plist[1].text == ":":
        if _atom(plist[2], "nat") != "nat":
            _fail(plist[2], "only nat parameter annotations exist")
        annotated = True
        plist = plist[:1]
    if len(plist) != 1:
        _fail(params, "functions take exactly one parameter")
    return Function(name, _name(plist[0], allow_reserved), _expr(items[3], allow_reserved),
                    annotated)


def _library(d, default_side: str, allow_reserved: bool) -> Library:
    items, _ = d
    side = _atom(items[1], "ctx or comp") if len(items) > 1 else None
    if side not in ("ctx", "comp"):
        _fail(d, "expected (lib ctx|comp fun*)")
    return Library(side, tuple(_function(f, allow_reserved) for f in items[2:]))


def _head(d) -> Optional[str]:
    if isinstance(d, tuple) and d[0] and not isinstance(d[0][0], tuple):
        return d[0][0].text
    return None


def parse_program(text: str, lang: str, side: str = "comp",
                  allow_reserved: bool = False) -> Union[Library, Program]:
    """Parse a library or a whole program and enforce the language gate.

    Accepted shapes: ``(lib ctx|comp fun*)``, a bare list of ``fun`` forms
    (a library on ``side``), or two ``lib`` forms (a program).
    """
    lang = lang_key(lang)
    toks = _tokenize(text)
    data = []
    i = 0
    while i < len(toks):
        d, i = _read(toks, i)
        data.append(d)
    libs = []
    try:
        if data and all(_head(d) == "lib" for d in data):
            libs = [_library(d, side, allow_reserved) for d in data]
        else:
            for d in data:
                if _head(d) != "fun":
                    _fail(d, "expected (lib ...) or (fun ...)")
            libs = [Library(side, tuple(_function(d, allow_reserved) for d in data))]
    except ValueError as exc:
        if isinstance(exc, SyntaxErr):
            raise
        raise SyntaxErr(1, 1, str(exc)) from None
    libs = [lib.with_lang(lang) for lib in libs]
    for lib in libs:
        check_gate(lib, lang)
    if len(libs) == 1:
        return libs[0]
    if len(libs) == 2:
        sides = {lib.side: lib for lib in libs}
        if set(sides) != {"ctx", "comp"}:
            raise SyntaxErr(1, 1, "a program needs one ctx and one comp library")
        return Program(lang, sides["ctx"], sides["comp"])
    raise SyntaxErr(1, 1, "expected one library or a ctx/comp pair")


def parse_expr(text: str, allow_reserved: bool = True) -> Expr:
    toks = _tokenize(text)
    d, i = _read(toks, 0)
    if i != len(toks):
        t = toks[i]
        raise SyntaxErr(t.line, t.col, "trailing input")
    return _expr(d, allow_reserved)


# ------------------------------------------------------------------- writer

def render_expr(e: Expr) -> str:
    if isinstance(e, Num):
        return str(e.n)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Pair):
        return f"(pair {render_expr(e.left)} {render_expr(e.right)})"
    if isinstance(e, Fst):
        return f"(fst {render_expr(e.e)})"
    if isinstance(e, Snd):
        return f"(snd {render_expr(e.e)})"
    if isinstance(e, BinOp):
        return f"({e.op} {render_expr(e.left)} {render_expr(e.right)})"
    if isinstance(e, Ifz):
        return f"(ifz {render_expr(e.cond)} {render_expr(e.then)} {render_expr(e.orelse)})"
    if isinstance(e, Let):
        return f"(let {e.name} {render_expr(e.bound)} {render_expr(e.body)})"
    if isinstance(e, New):
        return f"(new {e.name} {render_expr(e.size)} {render_expr(e.body)})"
    if isinstance(e, Delete):
        return f"(delete {e.name})"
    if isinstance(e, Get):
        return f"(get {e.name} {render_expr(e.index)})"
    if isinstance(e, Set):
        return f"(set {e.name} {render_expr(e.index)} {render_expr(e.value)})"
    if isinstance(e, Call):
        return f"(call {e.fn} {render_expr(e.arg)})"
    if isinstance(e, Return):
        return f"(return {render_expr(e.e)})"
    if isinstance(e, Abort):
        return "(abort)"
    if isinstance(e, HasT):
        return f"(hast {render_expr(e.e)} {e.ty})"
    if isinstance(e, IsPoisoned):
        return f"(ispoisoned {e.name})"
    if isinstance(e, WrDoit):
        return f"(wrdoit {e.mode})"
    if isinstance(e, RdDoit):
        return f"(rddoit {e.name} {render_expr(e.body)})"
    if isinstance(e, LetSec):
        return f"(let-sec {e.name} {e.sec} {render_expr(e.bound)} {render_expr(e.body)})"
    if isinstance(e, Barrier):
        return "(barrier)"
    if isinstance(e, Seq):
        return f"(seq {render_expr(e.first)} {render_expr(e.second)})"
    raise TypeError(f"not an expression: {e!r}")


def render_function(f: Function) -> str:
    param = f"({f.param} : nat)" if f.annotated else f"({f.param})"
    return f"(fun {f.name} {param} {render_expr(f.body)})"


def render_program(item: Union[Expr, Function, Library, Program]) -> str:
    if isinstance(item, Program):
        return render_program(item.ctx) + render_program(item.comp)
    if isinstance(item, Library):
        body = "".join(f"\n  {render_function(f)}" for f in item.functions)
        return f"(lib {item.side}{body})\n"
    if isinstance(item, Function):
        return render_function(item)
    return render_expr(item)


# ------------------------------------------------------- L_tms type system

class LinearityError(TypeError):
    def __init__(self, function: str, rule: str, detail: str):
        super().__init__(f"function {function}: {rule}: {detail}")
        self.function = function
        self.rule = rule


_BOTTOM = None  # capability set of an expression that never returns normally


class _Checker:
    def __init__(self, fname: str, lib_names: set):
        self.fname = fname
        self.lib_names = lib_names

    def fail(self, rule: str, detail: str):
        raise LinearityError(self.fname, rule, detail)

    def nat(self, e, env, caps):
        kind, caps = self.expr(e, env, caps)
        if kind != "nat" and caps is not _BOTTOM:
            self.fail("pointer escape", f"pointer used as a value in {render_expr(e)}")
        return caps

    def expr(self, e, env: dict, caps):
        """Returns (kind, caps) with kind 'nat' and caps the live pointers
        afterwards, or caps=None when control never reaches the end."""
        if caps is _BOTTOM:
            return "nat", _BOTTOM
        if isinstance(e, Num):
            return "nat", caps
        if isinstance(e, Var):
            kind = env.get(e.name)
            if kind is None:
                self.fail("unbound variable", e.name)
            if kind == "ptr":
                self.fail("pointer escape", f"pointer {e.name} used as a value")
            return "nat", caps
        if isinstance(e, BinOp):
            caps = self.nat(e.left, env, caps)
            return "nat", self.nat(e.right, env, caps)
        if isinstance(e, Seq):
            _, caps = self.expr(e.first, env, caps)
            return self.expr(e.second, env, caps)
        if isinstance(e, Ifz):
            caps = self.nat(e.cond, env, caps)
            if caps is _BOTTOM:
                return "nat", _BOTTOM
            _, a = self.expr(e.then, env, caps)
            _, b = self.expr(e.orelse, env, caps)
            if a is _BOTTOM:
                return "nat", b
            if b is _BOTTOM or a == b:
                return "nat", a
            self.fail("branch disagreement",
                      f"arms of {render_expr(e)[:60]} leave pointers "
                      f"{sorted(a)} vs {sorted(b)} live")
        if isinstance(e, Let):
            caps = self.nat(e.bound, env, caps)
            self.shadow_check(e.name, env, caps)
            return self.expr(e.body, {**env, e.name: "nat"}, caps)
        if isinstance(e, New):
            caps = self.nat(e.size, env, caps)
            if caps is _BOTTOM:
                return "nat", _BOTTOM
            self.shadow_check(e.name, env, caps)
            inner_env = {**env, e.name: "ptr"}
            _, after = self.expr(e.body, inner_env, caps | {e.name})
            if after is not _BOTTOM and e.name in after:
                self.fail("missing delete", f"pointer {e.name} is not deleted on every path")
            return "nat", after
        if isinstance(e, Delete):
            self.pointer(e.name, env)
            if e.name not in caps:
                self.fail("double delete", f"pointer {e.name} deleted twice")
            return "nat", caps - {e.name}
        if isinstance(e, Get):
            self.pointer(e.name, env)
            caps = self.nat(e.index, env, caps)
            self.live(e.name, caps)
            return "nat", caps
        if isinstance(e, Set):
            self.pointer(e.name, env)
            caps = self.nat(e.index, env, caps)
            caps = self.nat(e.value, env, caps)
            self.live(e.name, caps)
            return "nat", caps
        if isinstance(e, Call):
            return "nat", self.nat(e.arg, env, caps)
        if isinstance(e, Return):
            caps = self.nat(e.e, env, caps)
            if caps:
                self.fail("missing delete",
                          f"return leaves pointers {sorted(caps)} undeleted")
            return "nat", _BOTTOM
        if isinstance(e, Abort):
            return "nat", _BOTTOM
        self.fail("unsupported construct", type(e).__name__)

    def pointer(self, name, env):
        if env.get(name) != "ptr":
            self.fail("not a pointer", f"{name} is not bound by new")

    def live(self, name, caps):
        if caps is not _BOTTOM and name not in caps:
            self.fail("use after delete", f"pointer {name} accessed after delete")

    def shadow_check(self, name, env, caps):
        if env.get(name) == "ptr" and caps is not _BOTTOM and name in caps:
            self.fail("pointer escape", f"binding {name} hides a live pointer")


def typecheck_ltms(lib: Library) -> None:
    """Accept or raise :class:`LinearityError` naming function and rule."""
    check_gate(lib, "tms")
    names = frozenset(lib.names())
    for f in lib.functions:
        checker = _Checker(f.name, names)
        _, caps = checker.expr(f.body, {f.param: "nat"}, frozenset())
        if caps:
            checker.fail("missing delete", f"pointers {sorted(caps)} outlive the call")
