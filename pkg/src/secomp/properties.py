"""Prefix monitors for the memory-safety, constant-time and speculation
properties, all stated over ground-model traces.

Every whole-trace check is a fold of :func:`monitor_step`, so the index a
check reports is exactly the step at which the monitor first rejects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from .traces import CRASH, Event, ModelError, SPEC_KINDS, Trace, event_error

PROPERTIES = ("tms", "sms", "ms", "scct", "ss", "mct", "specms")


@dataclass(frozen=True)
class Verdict:
    ok: bool
    index: Optional[int] = None
    reason: str = ""

    def __str__(self) -> str:
        return "OK" if self.ok else f"VIOLATED {self.index} {self.reason}"

    def __bool__(self) -> bool:
        return self.ok


SATISFIED = Verdict(True)


@dataclass
class LocRecord:
    allocs: int = 0
    deallocs: int = 0
    # smallest size any earlier Alloc announced for this location
    size: Optional[int] = None


@dataclass
class MonitorState:
    prop: str
    locs: dict = field(default_factory=dict)

    def copy(self) -> "MonitorState":
        return MonitorState(self.prop, {k: LocRecord(r.allocs, r.deallocs, r.size)
                                        for k, r in self.locs.items()})


class MonitorViolation(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def fresh_state(prop: str) -> MonitorState:
    if prop not in PROPERTIES:
        raise ValueError(f"unknown property {prop!r}")
    return MonitorState(prop)


# --- per-clause steps; each mutates ``locs`` and returns a reason or None ---

def _tms(locs: dict, e: Event) -> Optional[str]:
    if e.kind == "Alloc":
        r = locs.setdefault(e.loc, LocRecord())
        if r.allocs:
            return f"second Alloc of l{e.loc}"
        if r.deallocs:
            return f"Alloc of l{e.loc} after its Dealloc"
        r.allocs += 1
    elif e.kind == "Dealloc":
        r = locs.setdefault(e.loc, LocRecord())
        if r.deallocs:
            return f"second Dealloc of l{e.loc}"
        r.deallocs += 1
    elif e.kind == "Use":
        r = locs.get(e.loc)
        if r is not None and r.deallocs:
            return f"Use of l{e.loc} after its Dealloc"
    return None


def _sms(locs: dict, e: Event) -> Optional[str]:
    if e.kind == "Alloc":
        r = locs.setdefault(e.loc, LocRecord())
        r.size = e.n if r.size is None else min(r.size, e.n)
    elif e.kind == "Use":
        r = locs.get(e.loc)
        if r is not None and r.size is not None and e.n >= r.size:
            return f"Use of l{e.loc} at offset {e.n} outside its {r.size} cells"
    return None


def _scct(e: Event) -> Optional[str]:
    if e.sec is not None and e.sec != "low":
        return f"{e.base_text()} carries secret tag {e.sec}"
    return None


def _ss(e: Event) -> Optional[str]:
    if e.kind in SPEC_KINDS:
        return None
    if e.sec == "high:PHT":
        return f"{e.base_text()} leaks under speculation"
    return None


def _advance(state: MonitorState, e: Event) -> Optional[str]:
    prop = state.prop
    if e.kind == CRASH:
        return None
    if prop == "tms":
        return _tms(state.locs, e)
    if prop == "sms":
        return _sms(state.locs, e)
    if prop == "scct":
        return _scct(e)
    if prop == "ss":
        return _ss(e)
    if prop == "specms":
        why = _ss(e)
        if why is not None:
            return why
        if e.kind in SPEC_KINDS:
            return None
    if prop in ("mct", "specms"):
        why = _scct(e)
        if why is not None:
            return why
    # ms and the memory part of mct/specms share one location table; the two
    # clauses keep disjoint counters so they cannot interfere.
    t = state.locs.setdefault("tms", {})
    s = state.locs.setdefault("sms", {})
    return _tms(t, e) or _sms(s, e)


def _check_ground_event(e: Event) -> None:
    err = event_error(e, "ground")
    if err is not None:
        raise ModelError(err)


def monitor_step(prop: str, state: MonitorState, event: Event) -> MonitorState:
    """One monitor transition. Returns the next state or raises
    :class:`MonitorViolation`; ``state`` itself is left untouched."""
    _check_ground_event(event)
    if state.prop != prop:
        raise ValueError(f"state belongs to {state.prop}, not {prop}")
    nxt = _copy_deep(state)
    why = _advance(nxt, event)
    if why is not None:
        raise MonitorViolation(why)
    return nxt


def _copy_deep(state: MonitorState) -> MonitorState:
    def cp(table):
        return {k: (cp(v) if isinstance(v, dict) else LocRecord(v.allocs, v.deallocs, v.size))
                for k, v in table.items()}
    return MonitorState(state.prop, cp(state.locs))


TraceLike = Union[Trace, Sequence[Event]]


def _events(trace: TraceLike) -> Iterable[Event]:
    if isinstance(trace, Trace):
        if trace.model != "ground":
            raise ModelError(f"monitors run on ground traces, got a {trace.model} trace")
        return trace.events
    return trace


def check(prop: str, trace: TraceLike) -> Verdict:
    state = fresh_state(prop)
    for i, e in enumerate(_events(trace)):
        _check_ground_event(e)
        why = _advance(state, e)
        if why is not None:
            return Verdict(False, i, why)
    return SATISFIED


def check_tms(trace: TraceLike) -> Verdict:
    return check("tms", trace)


def check_sms(trace: TraceLike) -> Verdict:
    return check("sms", trace)


def check_ms(trace: TraceLike) -> Verdict:
    return check("ms", trace)


def check_scct(trace: TraceLike) -> Verdict:
    return check("scct", trace)


def check_ss(trace: TraceLike) -> Verdict:
    return check("ss", trace)


def check_mct(trace: TraceLike) -> Verdict:
    return check("mct", trace)


def check_specms(trace: TraceLike) -> Verdict:
    return check("specms", trace)


CHECKS = {p: (lambda t, _p=p: check(_p, t)) for p in PROPERTIES}
