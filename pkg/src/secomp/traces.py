"""Events, traces and their line-oriented text format.

Four trace models share one event type:

* ``ms``     -- memory events tagged with a control tag (ctx/comp)
* ``ct``     -- adds Branch/Binop/iGet/iSet and a security tag (low/high)
* ``ghost``  -- adds Spec/Rlb/Barrier; secrets carry a variant (high:NONE, high:PHT)
* ``ground`` -- the model properties are stated in: Use instead of Get/Set,
  no control tag, optional security tag
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

MODELS = ("ms", "ct", "ghost", "ground")
CONTROL_TAGS = ("ctx", "comp")
SECURITY_TAGS = ("low", "high", "high:NONE", "high:PHT")

# kinds carrying (loc, n), (loc,), (n,) or nothing
LOC_N_KINDS = ("Alloc", "Get", "Set", "iGet", "iSet", "Use")
LOC_KINDS = ("Dealloc",)
N_KINDS = ("Branch", "Binop")
SPEC_KINDS = ("Spec", "Rlb", "Barrier")
ACCESS_KINDS = ("Get", "Set", "iGet", "iSet", "Use")
BASE_KINDS = LOC_N_KINDS + LOC_KINDS + N_KINDS

EMPTY = "Empty"
CRASH = "Crash"

_MODEL_KINDS = {
    "ms": {"Alloc", "Dealloc", "Get", "Set"},
    "ct": {"Alloc", "Dealloc", "Get", "Set", "iGet", "iSet", "Branch", "Binop"},
    "ghost": {"Alloc", "Dealloc", "Get", "Set", "iGet", "iSet", "Branch", "Binop",
              "Spec", "Rlb", "Barrier"},
    "ground": {"Alloc", "Dealloc", "Use", "Branch", "Binop", "Spec", "Rlb", "Barrier"},
}
_MODEL_SECS = {
    "ms": (None,),
    "ct": ("low", "high"),
    "ghost": ("low", "high:NONE", "high:PHT"),
    "ground": (None,) + SECURITY_TAGS,
}


class TraceParseError(ValueError):
    """Malformed trace text; ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ModelError(ValueError):
    """An event (or trace) does not belong to the expected trace model."""


@dataclass(frozen=True, slots=True)
class Event:
    kind: str
    loc: Optional[int] = None
    n: Optional[int] = None
    ctl: Optional[str] = None
    sec: Optional[str] = None

    def base_text(self) -> str:
        if self.kind in LOC_N_KINDS:
            return f"{self.kind} l{self.loc} {self.n}"
        if self.kind in LOC_KINDS:
            return f"{self.kind} l{self.loc}"
        if self.kind in N_KINDS:
            return f"{self.kind} {self.n}"
        return self.kind

    def __str__(self) -> str:
        if self.kind == CRASH:
            return "CRASH"
        if self.kind == EMPTY:
            return "ε"
        parts = [self.base_text()]
        if self.ctl is not None:
            parts.append(self.ctl)
        if self.sec is not None:
            parts.append(self.sec)
        return ";".join(parts)

    @property
    def is_base(self) -> bool:
        return self.kind in BASE_KINDS

    @property
    def is_secret(self) -> bool:
        return self.sec is not None and self.sec.startswith("high")

    def with_tags(self, ctl: Optional[str] = None, sec: Optional[str] = None) -> "Event":
        return Event(self.kind, self.loc, self.n, ctl, sec)

    def replace(self, **changes) -> "Event":
        fields = {"kind": self.kind, "loc": self.loc, "n": self.n,
                  "ctl": self.ctl, "sec": self.sec}
        fields.update(changes)
        return Event(**fields)


CRASH_EVENT = Event(CRASH)
EMPTY_EVENT = Event(EMPTY)


# Convenience constructors used throughout the tests and the interpreter.
def alloc(loc, n, ctl=None, sec=None):
    return Event("Alloc", loc, n, ctl, sec)


def dealloc(loc, ctl=None, sec=None):
    return Event("Dealloc", loc, None, ctl, sec)


def get(loc, n, ctl=None, sec=None):
    return Event("Get", loc, n, ctl, sec)


def set_(loc, n, ctl=None, sec=None):
    return Event("Set", loc, n, ctl, sec)


def use(loc, n, sec=None):
    return Event("Use", loc, n, None, sec)


def branch(n, ctl=None, sec=None):
    return Event("Branch", None, n, ctl, sec)


def binop(n, ctl=None, sec=None):
    return Event("Binop", None, n, ctl, sec)


def spec_event(kind, ctl=None, sec=None):
    return Event(kind, None, None, ctl, sec)


def event_error(event: Event, model: str) -> Optional[str]:
    """Why ``event`` is illegal in ``model``, or None when it is fine."""
    if model not in MODELS:
        return f"unknown trace model {model!r}"
    if event.kind == CRASH:
        if event.ctl is not None or event.sec is not None:
            return "CRASH carries no tags"
        return None
    if event.kind == EMPTY:
        return None
    if event.kind not in _MODEL_KINDS[model]:
        return f"{event.kind} is not an event of the {model} model"
    if model == "ground":
        if event.ctl is not None:
            return "ground events carry no control tag"
    elif event.ctl not in CONTROL_TAGS:
        return f"{model} events need a control tag"
    if event.sec not in _MODEL_SECS[model]:
        shown = event.sec if event.sec is not None else "no security tag"
        return f"{shown} is not a security tag of the {model} model"
    return None


def check_event(event: Event, model: str) -> None:
    err = event_error(event, model)
    if err is not None:
        raise ModelError(err)


@dataclass(frozen=True)
class Trace:
    model: str
    events: tuple = ()

    def __post_init__(self):
        if not isinstance(self.events, tuple):
            object.__setattr__(self, "events", tuple(self.events))

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Trace(self.model, self.events[i])
        return self.events[i]

    def __str__(self) -> str:
        return " · ".join(str(e) for e in self.events) or "⟨⟩"

    def filter(self, keep) -> "Trace":
        return Trace(self.model, tuple(e for e in self.events if keep(e)))


def validate(trace: Trace) -> None:
    """Raise ModelError unless every event fits the trace's model and
    nothing follows a crash."""
    for i, e in enumerate(trace.events):
        err = event_error(e, trace.model)
        if err is not None:
            raise ModelError(f"event {i}: {err}")
        if e.kind == CRASH and i != len(trace.events) - 1:
            raise ModelError(f"event {i}: nothing may follow CRASH")


def normalize(trace: Trace) -> Trace:
    return Trace(trace.model, tuple(e for e in trace.events if e.kind != EMPTY))


def render_trace(trace: Trace) -> str:
    return "".join(f"{e}\n" for e in trace.events if e.kind != EMPTY)


_LINE = re.compile(
    r"^(?:(?P<ln>Alloc|Get|Set|iGet|iSet|Use) l(?P<loc>\d+) (?P<n>\d+)"
    r"|(?P<lo>Dealloc) l(?P<loc2>\d+)"
    r"|(?P<nk>Branch|Binop) (?P<n2>\d+)"
    r"|(?P<bare>Spec|Rlb|Barrier))"
    r"(?:;(?P<t1>[A-Za-z:]+))?(?:;(?P<t2>[A-Za-z:]+))?$"
)


def parse_event(line: str, model: str, lineno: int = 1) -> Event:
    text = line.strip()
    if text == "CRASH":
        return CRASH_EVENT
    m = _LINE.match(text)
    if m is None:
        raise TraceParseError(lineno, f"cannot parse event {text!r}")
    if m.group("ln"):
        kind, loc, n = m.group("ln"), int(m.group("loc")), int(m.group("n"))
    elif m.group("lo"):
        kind, loc, n = m.group("lo"), int(m.group("loc2")), None
    elif m.group("nk"):
        kind, loc, n = m.group("nk"), None, int(m.group("n2"))
    else:
        kind, loc, n = m.group("bare"), None, None
    tags = [t for t in (m.group("t1"), m.group("t2")) if t is not None]
    ctl = sec = None
    if model == "ground":
        if len(tags) > 1:
            raise TraceParseError(lineno, "ground events take at most a security tag")
        if tags:
            sec = tags[0]
    else:
        if not tags:
            raise TraceParseError(lineno, "missing control tag")
        ctl = tags[0]
        if len(tags) > 1:
            sec = tags[1]
    for tag, allowed in ((ctl, CONTROL_TAGS + (None,)), (sec, SECURITY_TAGS + (None,))):
        if tag not in allowed:
            raise TraceParseError(lineno, f"unknown tag {tag!r}")
    event = Event(kind, loc, n, ctl, sec)
    err = event_error(event, model)
    if err is not None:
        raise ModelError(f"line {lineno}: {err}")
    return event


def parse_trace(text: str, model: str) -> Trace:
    if model not in MODELS:
        raise ModelError(f"unknown trace model {model!r}")
    events = []
    crashed_at = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if crashed_at is not None:
            raise ModelError(f"line {lineno}: nothing may follow CRASH (line {crashed_at})")
        e = parse_event(line, model, lineno)
        if e.kind == CRASH:
            crashed_at = lineno
        events.append(e)
    return Trace(model, tuple(events))


def project_event(e: Event, independent_low: bool = False) -> Optional[Event]:
    """Ground view of one language-model event (None when dropped)."""
    if e.kind == EMPTY or e.ctl == "ctx":
        return None
    if e.kind == CRASH:
        return CRASH_EVENT
    sec = e.sec
    if e.kind in ("Get", "Set", "iGet", "iSet"):
        if independent_low and e.kind in ("iGet", "iSet") and sec in ("high", "high:NONE"):
            sec = "low"
        return Event("Use", e.loc, e.n, None, sec)
    return Event(e.kind, e.loc, e.n, None, sec)


def project_ground(trace: Trace, independent_low: bool = False) -> Trace:
    """Map a language trace to the ground model.

    Context events vanish, memory accesses become ``Use``. With
    ``independent_low`` the data-independent accesses (iGet/iSet) are
    reported as public, which is how the specification column of the
    constant-time example reads them; speculative leaks keep their tag.
    """
    if trace.model == "ground":
        return trace
    out = []
    for e in trace.events:
        p = project_event(e, independent_low)
        if p is not None:
            out.append(p)
    return Trace("ground", tuple(out))


def ground(events: Iterable[Event]) -> Trace:
    return Trace("ground", tuple(events))


def trace_of(model: str, events: Sequence[Event]) -> Trace:
    t = Trace(model, tuple(events))
    validate(t)
    return t
