"""Event-emitting interpreter for all five languages.

The machine is a CEK-style small-step interpreter: a configuration holds
either an expression to evaluate or a value to return, an environment, a
continuation (a linked list of frames), the executing side, the
constant-time mode and the memory. One call to :meth:`Machine.step` is one
transition and emits at most a couple of events.

L_ghost adds a one-frame speculation stack: every conditional pushes a copy
of the configuration that runs the branch not taken for at most ``omega``
observable events before it is rolled back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import languages as ast
from .languages import LANG_NAMES, TRACE_MODEL, Library, Program, lang_key
from .traces import CRASH_EVENT, Event, Trace


class LinkError(ValueError):
    pass


# ------------------------------------------------------------------ values

class VNum:
    __slots__ = ("n", "sec")

    def __init__(self, n: int, sec: str = "low"):
        self.n = n
        self.sec = sec

    def __eq__(self, other):
        return isinstance(other, VNum) and other.n == self.n and other.sec == self.sec

    def __hash__(self):
        return hash(("num", self.n, self.sec))

    def __repr__(self):
        return str(self.n) if self.sec == "low" else f"{self.n}^{self.sec}"


class VPair:
    __slots__ = ("left", "right", "sec")

    def __init__(self, left, right, sec: str = "low"):
        self.left = left
        self.right = right
        self.sec = sec

    def __eq__(self, other):
        return (isinstance(other, VPair) and other.left == self.left
                and other.right == self.right and other.sec == self.sec)

    def __hash__(self):
        return hash(("pair", self.left, self.right, self.sec))

    def __repr__(self):
        return f"(pair {self.left!r} {self.right!r})"


class VPtr:
    __slots__ = ("ref", "sec")

    def __init__(self, ref: int, sec: str = "low"):
        self.ref = ref
        self.sec = sec

    def __eq__(self, other):
        return isinstance(other, VPtr) and other.ref == self.ref and other.sec == self.sec

    def __hash__(self):
        return hash(("ptr", self.ref, self.sec))

    def __repr__(self):
        return f"<ptr {self.ref}>"


def join(a: str, b: str) -> str:
    return "high" if "high" in (a, b) else "low"


def with_sec(v, sec: str):
    if isinstance(v, VNum):
        return VNum(v.n, sec)
    if isinstance(v, VPair):
        return VPair(v.left, v.right, sec)
    return VPtr(v.ref, sec)


ZERO = VNum(0)


@dataclass(frozen=True)
class Outcome:
    kind: str  # "done" | "crashed" | "fuel_exhausted"
    value: object = None

    def __str__(self) -> str:
        if self.kind == "done":
            v = self.value
            return f"done {v.n}" if isinstance(v, VNum) else f"done {v!r}"
        return self.kind


# ------------------------------------------------------------------ memory

class Memory:
    """Two sandboxed heaps plus the pointer map.

    Pointer-map entries are ``[loc, owner, live, base, size]`` keyed by an
    allocation reference; freed entries stay so a second free is visible.
    """

    __slots__ = ("heaps", "next_addr", "ptrs")

    def __init__(self):
        self.heaps = {"ctx": {}, "comp": {}}
        self.next_addr = {"ctx": 0, "comp": 0}
        self.ptrs = {}

    def clone(self) -> "Memory":
        m = Memory.__new__(Memory)
        m.heaps = {k: dict(h) for k, h in self.heaps.items()}
        m.next_addr = dict(self.next_addr)
        m.ptrs = {k: list(v) for k, v in self.ptrs.items()}
        return m


# ----------------------------------------------------------- configuration

SPEC_LOC_BASE = 1_000_000

HALT = None  # empty continuation


class Config:
    __slots__ = ("expr", "env", "value", "kont", "side", "ct_on", "mem")

    def __init__(self, expr, env, value, kont, side, ct_on, mem):
        self.expr = expr      # expression to evaluate, or None when returning
        self.env = env
        self.value = value    # value being returned when expr is None
        self.kont = kont      # (frame, rest) linked list
        self.side = side
        self.ct_on = ct_on
        self.mem = mem

    def clone(self) -> "Config":
        return Config(self.expr, self.env, self.value, self.kont, self.side,
                      self.ct_on, self.mem.clone())


def link(ctx: Library, comp: Library, lang: Optional[str] = None) -> Program:
    if ctx.side != "ctx":
        raise LinkError("the first library must be the context (ctx side)")
    if comp.side != "comp":
        raise LinkError("comp side required: the second library must be a component")
    langs = {x for x in (lang and lang_key(lang), ctx.lang, comp.lang) if x}
    if len(langs) > 1:
        shown = ", ".join(LANG_NAMES[x] for x in sorted(langs))
        raise LinkError(f"cannot link libraries of different languages: {shown}")
    if not langs:
        raise LinkError("no language given for linking")
    (key,) = langs
    clash = set(ctx.names()) & set(comp.names())
    if clash:
        raise LinkError(f"function names defined on both sides: {', '.join(sorted(clash))}")
    if ctx.lookup("main") is None:
        raise LinkError("the context does not define main")
    ast.check_gate(ctx, key)
    ast.check_gate(comp, key)
    return Program(key, ctx.with_lang(key), comp.with_lang(key))


class _Fault(Exception):
    """A runtime error; becomes a crash, or a rollback under speculation."""


class Machine:
    def __init__(self, program: Program, omega: int = 3):
        self.lang = lang_key(program.lang)
        self.model = TRACE_MODEL[self.lang]
        self.tagged = self.model in ("ct", "ghost")
        self.ghost = self.lang == "ghost"
        self.omega = omega
        self.funcs = {}
        for lib in (program.ctx, program.comp):
            for f in lib.functions:
                self.funcs[f.name] = (f, lib.side)
        self.next_loc = 0
        # allocations that only happen speculatively draw from their own
        # range, so real allocations are numbered the same with or without
        # speculation and ids are still never reused
        self.next_spec_loc = SPEC_LOC_BASE
        self.next_ref = 0
        self.events = []
        # speculation: [config, remaining window] or None
        self.spec = None
        main = self.funcs.get("main")
        if main is None or main[1] != "ctx":
            raise LinkError("the context does not define main")
        mem = Memory()
        f, side = main
        self.base = Config(f.body, {f.param: VNum(0)}, None, (("ret", "ctx"), HALT),
                           "ctx", False, mem)

    # -- event emission --------------------------------------------------

    def _sec(self, sec: str, speculative: bool) -> Optional[str]:
        if not self.tagged:
            return None
        if not self.ghost:
            return sec
        if sec == "low":
            return "low"
        return "high:PHT" if speculative else "high:NONE"

    def emit(self, cfg: Config, kind: str, loc=None, n=None, sec="low",
             speculative=False) -> int:
        if kind in ("Branch", "Binop") and (not self.tagged or cfg.ct_on):
            return 0
        if cfg.ct_on and kind in ("Get", "Set"):
            kind = "i" + kind
        self.events.append(Event(kind, loc, n, cfg.side, self._sec(sec, speculative)))
        return 1

    # -- main loop ---------------------------------------------------------

    def run(self, fuel: int) -> tuple:
        while fuel > 0:
            fuel -= 1
            if self.spec is not None:
                self.spec_step()
                continue
            status = self.step(self.base, False)
            if status is not None:
                return Trace(self.model, tuple(self.events)), status
        return Trace(self.model, tuple(self.events)), Outcome("fuel_exhausted")

    def spec_step(self) -> None:
        cfg, window = self.spec
        if window <= 0:
            self.rollback(cfg)
            return
        before = len(self.events)
        try:
            status = self.step(cfg, True)
        except _Barrier:
            self.spec[1] = 0
            return
        if status is not None:  # speculation ran into a crash or the program end
            self.rollback(cfg)
            return
        self.spec[1] = window - (len(self.events) - before)

    def rollback(self, cfg: Config) -> None:
        self.events.append(Event("Rlb", None, None, cfg.side, "low"))
        self.spec = None

    # -- one transition ----------------------------------------------------

    def step(self, cfg: Config, speculative: bool):
        """Advance ``cfg`` in place. Returns an Outcome when it terminates."""
        try:
            if cfg.expr is not None:
                self.eval_step(cfg, speculative)
                return None
            return self.return_step(cfg, speculative)
        except _Fault:
            if not speculative:
                self.events.append(CRASH_EVENT)
            return Outcome("crashed")

    def lookup(self, cfg: Config, name: str):
        try:
            return cfg.env[name]
        except KeyError:
            raise _Fault(f"unbound variable {name}") from None

    def pointer(self, cfg: Config, name: str):
        v = self.lookup(cfg, name)
        if not isinstance(v, VPtr):
            raise _Fault(f"{name} is not a pointer")
        return v, cfg.mem.ptrs[v.ref]

    def push(self, cfg: Config, frame, expr, env=None):
        cfg.kont = (frame, cfg.kont)
        cfg.expr = expr
        if env is not None:
            cfg.env = env

    def ret(self, cfg: Config, value) -> None:
        cfg.expr = None
        cfg.value = value

    def eval_step(self, cfg: Config, speculative: bool) -> None:
        e = cfg.expr
        env = cfg.env
        t = type(e)
        if t is ast.Num:
            self.ret(cfg, VNum(e.n))
        elif t is ast.Var:
            self.ret(cfg, self.lookup(cfg, e.name))
        elif t is ast.BinOp:
            self.push(cfg, ("binop_r", e.op, e.right, env), e.left)
        elif t is ast.Ifz:
            self.push(cfg, ("ifz", e.then, e.orelse, env), e.cond)
        elif t is ast.Let:
            self.push(cfg, ("let", e.name, e.body, env), e.bound)
        elif t is ast.Seq:
            self.push(cfg, ("seq", e.second, env), e.first)
        elif t is ast.New:
            self.push(cfg, ("new", e.name, e.body, env), e.size)
        elif t is ast.Get:
            self.push(cfg, ("get", e.name, env), e.index)
        elif t is ast.Set:
            self.push(cfg, ("set_v", e.name, e.value, env), e.index)
        elif t is ast.Delete:
            self.delete(cfg, e.name, speculative)
        elif t is ast.Call:
            self.push(cfg, ("call", e.fn), e.arg)
        elif t is ast.Return:
            self.push(cfg, ("return",), e.e)
        elif t is ast.Abort:
            raise _Fault("abort")
        elif t is ast.Pair:
            self.push(cfg, ("pair_r", e.right, env), e.left)
        elif t is ast.Fst:
            self.push(cfg, ("fst",), e.e)
        elif t is ast.Snd:
            self.push(cfg, ("snd",), e.e)
        elif t is ast.HasT:
            self.push(cfg, ("hast", e.ty), e.e)
        elif t is ast.IsPoisoned:
            v, entry = self.pointer(cfg, e.name)
            self.ret(cfg, VNum(1 if entry[2] else 0, v.sec))
        elif t is ast.WrDoit:
            cfg.ct_on = e.mode == "on"
            self.ret(cfg, ZERO)
        elif t is ast.RdDoit:
            cfg.env = {**env, e.name: VNum(0 if cfg.ct_on else 1)}
            cfg.expr = e.body
        elif t is ast.LetSec:
            self.push(cfg, ("letsec", e.name, e.sec, e.body, env), e.bound)
        elif t is ast.Barrier:
            if speculative:
                self.events.append(Event("Barrier", None, None, cfg.side, "low"))
                raise _Barrier()
            self.ret(cfg, ZERO)
        else:  # pragma: no cover
            raise TypeError(f"unknown expression {e!r}")

    def return_step(self, cfg: Config, speculative: bool):
        if cfg.kont is HALT:
            return Outcome("done", cfg.value)
        frame, rest = cfg.kont
        v = cfg.value
        tag = frame[0]
        cfg.kont = rest
        if tag == "binop_r":
            self.push(cfg, ("binop", frame[1], v), frame[2], frame[3])
        elif tag == "binop":
            self.ret(cfg, self.binop(cfg, frame[1], frame[2], v, speculative))
        elif tag == "ifz":
            if not isinstance(v, VNum):
                raise _Fault("conditional on a non-number")
            taken, other = (frame[1], frame[2]) if v.n == 0 else (frame[2], frame[1])
            self.emit(cfg, "Branch", n=v.n, sec=v.sec, speculative=speculative)
            cfg.expr = taken
            cfg.env = frame[3]
            if self.ghost and not speculative:
                self.events.append(Event("Spec", None, None, cfg.side,
                                         self._sec(v.sec, False)))
                shadow = cfg.clone()
                shadow.expr = other
                self.spec = [shadow, self.omega]
        elif tag == "let":
            cfg.env = {**frame[3], frame[1]: v}
            cfg.expr = frame[2]
        elif tag == "letsec":
            cfg.env = {**frame[4], frame[1]: with_sec(v, join(v.sec, frame[2]))}
            cfg.expr = frame[3]
        elif tag == "seq":
            cfg.expr = frame[1]
            cfg.env = frame[2]
        elif tag == "new":
            self.new(cfg, frame[1], v, frame[2], frame[3], speculative)
        elif tag == "get":
            self.ret(cfg, self.access(cfg, frame[1], v, None, frame[2], speculative))
        elif tag == "set_v":
            self.push(cfg, ("set", frame[1], v, frame[3]), frame[2], frame[3])
        elif tag == "set":
            self.ret(cfg, self.access(cfg, frame[1], frame[2], v, frame[3], speculative))
        elif tag == "call":
            target = self.funcs.get(frame[1])
            if target is None:
                raise _Fault(f"unknown function {frame[1]}")
            f, side = target
            cfg.kont = (("ret", cfg.side, cfg.env), cfg.kont)
            cfg.side = side
            cfg.env = {f.param: v}
            cfg.expr = f.body
        elif tag == "ret":
            cfg.side = frame[1]
            if len(frame) > 2:
                cfg.env = frame[2]
        elif tag == "return":
            k = cfg.kont
            while k is not HALT and k[0][0] != "ret":
                k = k[1]
            if k is HALT:
                return Outcome("done", v)
            cfg.kont = k
        elif tag == "pair_r":
            self.push(cfg, ("pair", v), frame[1], frame[2])
        elif tag == "pair":
            self.ret(cfg, VPair(frame[1], v))
        elif tag in ("fst", "snd"):
            if not isinstance(v, VPair):
                raise _Fault(f"{tag} of a non-pair")
            part = v.left if tag == "fst" else v.right
            self.ret(cfg, with_sec(part, join(part.sec, v.sec)))
        elif tag == "hast":
            kind = {"nat": VNum, "pair": VPair, "ptr": VPtr}[frame[1]]
            self.ret(cfg, VNum(0 if isinstance(v, kind) else 1, v.sec))
        else:  # pragma: no cover
            raise TypeError(f"unknown frame {frame!r}")
        return None

    # -- primitive operations ---------------------------------------------

    def binop(self, cfg, op, a, b, speculative):
        if not (isinstance(a, VNum) and isinstance(b, VNum)):
            raise _Fault("arithmetic on a non-number")
        sec = join(a.sec, b.sec)
        if op == "+":
            return VNum(a.n + b.n, sec)
        if op == "-":
            return VNum(max(a.n - b.n, 0), sec)
        if op == "*":
            return VNum(a.n * b.n, sec)
        if b.n == 0:
            raise _Fault("division by zero")
        r = VNum(a.n // b.n, sec)
        self.emit(cfg, "Binop", n=r.n, sec=sec, speculative=speculative)
        return r

    def new(self, cfg, name, size, body, env, speculative):
        if not isinstance(size, VNum):
            raise _Fault("allocation size is not a number")
        mem = cfg.mem
        side = cfg.side
        base = mem.next_addr[side]
        mem.next_addr[side] = base + size.n
        if speculative:
            loc = self.next_spec_loc
            self.next_spec_loc += 1
        else:
            loc = self.next_loc
            self.next_loc += 1
        ref = self.next_ref
        self.next_ref += 1
        mem.ptrs[ref] = [loc, side, True, base, size.n]
        self.emit(cfg, "Alloc", loc=loc, n=size.n,
                  sec="low" if cfg.ct_on else size.sec, speculative=speculative)
        cfg.env = {**env, name: VPtr(ref)}
        cfg.expr = body

    def delete(self, cfg, name, speculative):
        v, entry = self.pointer(cfg, name)
        entry[2] = False
        self.emit(cfg, "Dealloc", loc=entry[0], sec="low" if cfg.ct_on else v.sec,
                  speculative=speculative)
        self.ret(cfg, ZERO)

    def access(self, cfg, name, index, value, env, speculative):
        """Get (value is None) or Set through the pointer bound to ``name``."""
        cfg.env = env
        v, entry = self.pointer(cfg, name)
        if not isinstance(index, VNum):
            raise _Fault("index is not a number")
        loc, owner, live, base, size = entry
        kind = "Get" if value is None else "Set"
        sec = join(v.sec, index.sec)
        in_bounds = live and index.n < size
        heap = cfg.mem.heaps[owner]
        addr = base + index.n
        if not in_bounds and not speculative and not 0 <= addr < cfg.mem.next_addr[owner]:
            raise _Fault("access outside the heap")
        if not in_bounds and speculative:
            # speculative access past the checks: reads whatever is there and
            # counts as a speculative leak
            self.emit(cfg, kind, loc=loc, n=index.n, sec="high", speculative=True)
            if value is None:
                cell = heap.get(addr, ZERO)
                return VNum(cell.n if isinstance(cell, VNum) else 0, "high")
            return ZERO
        # unchecked memory: out-of-bounds and freed accesses inside the heap
        # go through to whatever the flat heap holds at that address
        if value is None:
            cell = heap.get(addr, ZERO)
            sec = join(sec, cell.sec)
            self.emit(cfg, kind, loc=loc, n=index.n, sec=sec, speculative=speculative)
            return with_sec(cell, sec)
        sec = join(sec, value.sec)
        self.emit(cfg, kind, loc=loc, n=index.n, sec=sec, speculative=speculative)
        heap[addr] = value
        return ZERO


class _Barrier(Exception):
    """Raised by a speculative barrier to close the window."""


def run(program: Program, fuel: int = 10_000, omega: int = 3) -> tuple:
    """Execute ``program`` from the context's main applied to 0."""
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    if omega < 0:
        raise ValueError("omega must be non-negative")
    return Machine(program, omega).run(fuel)


def run_libs(ctx: Library, comp: Library, lang: str, fuel: int = 10_000, omega: int = 3):
    return run(link(ctx, comp, lang), fuel, omega)
