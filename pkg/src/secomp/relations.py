"""Cross-language trace relations.

A relation is a finite list of rules. A rule either consumes one event of
the left trace or none (an ε-left rule), and describes what it produces on
the right as a short pattern of slots. The same description drives both
directions of use: matching a given right trace, and enumerating every
right trace over a finite alphabet (needed for the bounded image checks).
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

from .properties import check
from .traces import (CRASH, CRASH_EVENT, EMPTY, Event, ModelError, Trace, event_error,
                     project_ground, spec_event)

Pred = Callable[[Event], bool]


# ------------------------------------------------------------------ slots

@dataclass(frozen=True)
class Fixed:
    event: Event

    def __str__(self):
        return str(self.event)


@dataclass(frozen=True)
class Any1:
    """Exactly one event satisfying ``pred``."""
    pred: Pred
    label: str

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class Many:
    """Zero up to ``limit`` events satisfying ``pred`` (no limit when None)."""
    pred: Pred
    label: str
    limit: Optional[int] = None

    def __str__(self):
        return f"{self.label}*"


def _match(slots: Sequence, rhs: Sequence[Event], j: int) -> Iterator[int]:
    """End positions at which ``slots`` matches ``rhs`` starting at ``j``."""
    if not slots:
        yield j
        return
    head, rest = slots[0], slots[1:]
    if isinstance(head, Fixed):
        if j < len(rhs) and rhs[j] == head.event:
            yield from _match(rest, rhs, j + 1)
    elif isinstance(head, Any1):
        if j < len(rhs) and head.pred(rhs[j]):
            yield from _match(rest, rhs, j + 1)
    else:
        k = j
        while True:
            yield from _match(rest, rhs, k)
            if k >= len(rhs) or not head.pred(rhs[k]):
                break
            if head.limit is not None and k - j >= head.limit:
                break
            k += 1


def _expand(slots: Sequence, alphabet: Sequence[Event], room: int) -> Iterator[tuple]:
    """Every event sequence ``slots`` produces over ``alphabet``, at most
    ``room`` events long."""
    if not slots:
        yield ()
        return
    head, rest = slots[0], slots[1:]
    if isinstance(head, Fixed):
        if room >= 1:
            for tail in _expand(rest, alphabet, room - 1):
                yield (head.event,) + tail
        return
    pool = [e for e in alphabet if head.pred(e)]
    if isinstance(head, Any1):
        if room >= 1:
            for e in pool:
                for tail in _expand(rest, alphabet, room - 1):
                    yield (e,) + tail
        return
    top = room if head.limit is None else min(room, head.limit)
    for k in range(top + 1):
        for chosen in itertools.product(pool, repeat=k):
            for tail in _expand(rest, alphabet, room - k):
                yield chosen + tail


def _cut(slots: Sequence, alphabet: Sequence[Event], room: int) -> bool:
    """Would a longer budget have admitted more expansions?"""
    if room < 0:
        return True
    return any(len(seq) > room for seq in _expand(slots, alphabet, room + 1))


# ------------------------------------------------------------------ relations

@dataclass(frozen=True)
class Rule:
    name: str
    consumes: bool
    # left event (None for ε-left rules) and location sizes -> slots, or None
    image: Callable[[Optional[Event], dict], Optional[tuple]]


@dataclass(frozen=True)
class TraceRelation:
    name: str
    left_model: str
    right_model: str
    rules: tuple
    env: Optional[dict] = None
    left_alphabet: tuple = ()
    right_alphabet: tuple = ()

    def with_env(self, env: dict) -> "TraceRelation":
        return TraceRelation(self.name, self.left_model, self.right_model, self.rules,
                             dict(env), self.left_alphabet, self.right_alphabet)


@dataclass(frozen=True)
class Step:
    rule: str
    left: tuple
    right: tuple

    def __str__(self):
        lhs = " · ".join(map(str, self.left)) or "ε"
        rhs = " · ".join(map(str, self.right)) or "ε"
        return f"{self.rule}: {lhs} ∼ {rhs}"


@dataclass(frozen=True)
class RelationVerdict:
    # True, False, or None for an inconclusive bounded search
    related: Optional[bool]
    witness: tuple = ()
    intermediate: Optional[tuple] = None
    reason: str = ""

    def __bool__(self):
        return self.related is True

    def __str__(self):
        if self.related is None:
            return "INCONCLUSIVE" + (f" {self.reason}" if self.reason else "")
        return "RELATED" if self.related else "NOT RELATED"


def _events(trace, model: Optional[str] = None) -> tuple:
    if isinstance(trace, Trace):
        if model is not None and trace.model != model and "ground" not in (trace.model, model):
            raise ModelError(f"expected a {model} trace, got {trace.model}")
        return tuple(e for e in trace.events if e.kind != EMPTY)
    return tuple(e for e in trace if e.kind != EMPTY)


def env_from_trace(events: Iterable[Event], base: Optional[dict] = None) -> dict:
    env = dict(base or {})
    for e in events:
        if e.kind == "Alloc":
            env[e.loc] = e.n
    return env


def _prefix_envs(rel: TraceRelation, lhs: Sequence[Event]) -> list:
    envs = [dict(rel.env or {})]
    for e in lhs:
        cur = envs[-1]
        if e.kind == "Alloc" and e.ctl != "ctx":
            cur = {**cur, e.loc: e.n}
        envs.append(cur)
    return envs


def related(rel: TraceRelation, lhs, rhs, crash_prefix: bool = False) -> RelationVerdict:
    """Pointwise lifting with ε on either side, decided by a search over
    (left position, right position) pairs.

    With ``crash_prefix`` a right trace ending in CRASH may also relate to a
    prefix of the left one: the target stopped where the source went on.
    """
    left = _events(lhs, rel.left_model)
    right = _events(rhs, rel.right_model)
    envs = _prefix_envs(rel, left)
    start = (0, 0)
    stops = crash_prefix and bool(right) and right[-1].kind == CRASH
    goal = None
    parent = {start: None}
    queue = deque([start])
    eps_rules = [r for r in rel.rules if not r.consumes]
    eat_rules = [r for r in rel.rules if r.consumes]
    while queue:
        i, j = state = queue.popleft()
        if j == len(right) and (i == len(left) or stops):
            goal = state
            break
        moves = []
        if i < len(left):
            for r in eat_rules:
                slots = r.image(left[i], envs[i])
                if slots is not None:
                    moves += [(r.name, i + 1, k) for k in _match(slots, right, j)]
        for r in eps_rules:
            slots = r.image(None, envs[i])
            if slots is not None:
                moves += [(r.name, i, k) for k in _match(slots, right, j) if k > j]
        for name, ni, nj in moves:
            if (ni, nj) not in parent:
                parent[(ni, nj)] = (state, name)
                queue.append((ni, nj))
    if goal is None:
        return RelationVerdict(False)
    steps = []
    node = goal
    while parent[node] is not None:
        prev, name = parent[node]
        steps.append(Step(name, left[prev[0]:node[0]], right[prev[1]:node[1]]))
        node = prev
    return RelationVerdict(True, tuple(reversed(steps)))


def images(rel: TraceRelation, lhs, alphabet: Optional[Sequence[Event]] = None,
           maxlen: int = 8, max_eps: Optional[int] = None) -> tuple:
    """All right traces related to ``lhs`` whose ε-left material comes from
    ``alphabet``. Returns (set of traces, truncated?) where truncated means
    the length bound cut some candidate off."""
    left = _events(lhs)
    alpha = tuple(alphabet if alphabet is not None else rel.right_alphabet)
    envs = _prefix_envs(rel, left)
    out, seen = set(), set()
    truncated = False
    stack = [(0, (), 0)]
    while stack:
        i, acc, eps = node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        if i == len(left):
            out.add(acc)
        room = maxlen - len(acc)
        if i < len(left):
            for r in rel.rules:
                if not r.consumes:
                    continue
                slots = r.image(left[i], envs[i])
                if slots is None:
                    continue
                truncated = truncated or _cut(slots, alpha, room)
                for seq in _expand(slots, alpha, room):
                    stack.append((i + 1, acc + seq, eps))
        if max_eps is None or eps < max_eps:
            for r in rel.rules:
                if r.consumes:
                    continue
                slots = r.image(None, envs[i])
                if slots is None:
                    continue
                for seq in _expand(slots, alpha, room):
                    if seq:
                        stack.append((i, acc + seq, eps + 1))
                truncated = truncated or _cut(slots, alpha, room)
    return out, truncated


# ------------------------------------------------------------------ property view

def satisfies(prop: str, events: Sequence[Event], model: str) -> bool:
    """Does a language-model (or ground) trace satisfy a ground property?"""
    evs = tuple(events)
    if model == "ground" or all(e.ctl is None for e in evs):
        ground = Trace("ground", tuple(e for e in evs if e.kind != EMPTY))
    else:
        ground = project_ground(Trace(model, evs), independent_low=True)
    return check(prop, ground).ok


def sigma_member(rel: TraceRelation, prop: str, trace, alphabet=None, maxlen: int = 4) -> bool:
    """Every related right trace (over ``alphabet``, length <= ``maxlen``)
    satisfies ``prop``."""
    found, _ = images(rel, trace, alphabet, maxlen)
    return all(satisfies(prop, t, rel.right_model) for t in found)


def sigma_counterexample(rel, prop, trace, alphabet=None, maxlen=4) -> Optional[tuple]:
    found, _ = images(rel, trace, alphabet, maxlen)
    bad = sorted((t for t in found if not satisfies(prop, t, rel.right_model)),
                 key=lambda t: (len(t), tuple(map(str, t))))
    return bad[0] if bad else None


def all_traces(alphabet: Sequence[Event], maxlen: int) -> Iterator[tuple]:
    for n in range(maxlen + 1):
        yield from itertools.product(alphabet, repeat=n)


def tau_member(rel: TraceRelation, prop: str, trace, alphabet=None, maxlen: int = 4) -> bool:
    """Some left trace over ``alphabet`` related to ``trace`` satisfies ``prop``."""
    return tau_witness(rel, prop, trace, alphabet, maxlen) is not None


def tau_witness(rel, prop, trace, alphabet=None, maxlen=4) -> Optional[tuple]:
    target = _events(trace)
    if alphabet is None:
        # the relation's alphabet plus re-tagged copies of the target's events
        near = (e for e in _neighbours(target) if event_error(e, rel.left_model) is None)
        alpha = tuple(dict.fromkeys(rel.left_alphabet + tuple(near)))
    else:
        alpha = tuple(alphabet)
    for cand in all_traces(alpha, maxlen):
        if satisfies(prop, cand, rel.left_model) and related(rel, cand, target):
            return cand
    return None


def _neighbours(events: Iterable[Event]) -> tuple:
    """Events plus their re-tagged variants: the candidate alphabet for an
    intermediate trace."""
    out = []
    for e in events:
        if e.kind in (CRASH, EMPTY):
            out.append(e)
            continue
        for sec in (None, "low", "high", "high:NONE", "high:PHT"):
            for kind in {e.kind, *_ACCESS_TWINS.get(e.kind, ())}:
                out.append(Event(kind, e.loc, e.n, e.ctl, sec))
    return tuple(dict.fromkeys(out))


_ACCESS_TWINS = {"Get": ("iGet",), "iGet": ("Get",), "Set": ("iSet",), "iSet": ("Set",),
                 "Use": ("Get", "Set")}


def compose(rel1: TraceRelation, rel2: TraceRelation, lhs, rhs, bound: int) -> RelationVerdict:
    """``lhs (rel1 • rel2) rhs`` via an intermediate trace of length <= bound."""
    left, right = _events(lhs), _events(rhs)
    alpha = tuple(dict.fromkeys(_neighbours(left + right) + rel1.right_alphabet))
    mids, truncated = images(rel1, left, alpha, bound)
    for mid in sorted(mids, key=lambda t: (len(t), tuple(map(str, t)))):
        v = related(rel2, mid, right)
        if v:
            return RelationVerdict(True, v.witness, mid)
    if truncated:
        return RelationVerdict(None, reason=f"no intermediate trace within {bound} events")
    return RelationVerdict(False)


def relate_chain(rels: Sequence[TraceRelation], lhs, rhs, bound: Optional[int] = None) -> RelationVerdict:
    if len(rels) == 1:
        return related(rels[0], lhs, rhs)
    left, right = _events(lhs), _events(rhs)
    bound = bound if bound is not None else len(left) + len(right) + 2
    if len(rels) == 2:
        return compose(rels[0], rels[1], left, right, bound)
    # fold the chain through intermediate image sets
    alpha = _neighbours(left + right)
    layer, truncated = {left}, False
    for rel in rels[:-1]:
        nxt = set()
        for t in layer:
            found, cut = images(rel, t, tuple(dict.fromkeys(alpha + rel.right_alphabet)), bound)
            nxt |= found
            truncated |= cut
        layer = nxt
    for mid in layer:
        v = related(rels[-1], mid, right)
        if v:
            return RelationVerdict(True, v.witness, mid)
    if truncated:
        return RelationVerdict(None, reason=f"no intermediate trace within {bound} events")
    return RelationVerdict(False)


# ------------------------------------------------------------------ well-formedness

@dataclass
class WfReport:
    relation: str
    prop: str
    maxlen: int
    checked: int = 0
    counterexamples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.counterexamples

    def __str__(self):
        if self.ok:
            return f"WF OK rel={self.relation} prop={self.prop} maxlen={self.maxlen} traces={self.checked}"
        left, right = self.counterexamples[0]
        shown = " · ".join(map(str, left)) or "ε"
        image = " · ".join(map(str, right)) or "ε"
        return (f"WF VIOLATED rel={self.relation} prop={self.prop} maxlen={self.maxlen} "
                f"trace=[{shown}] image=[{image}]")


def wf_class(rel: TraceRelation, prop: str, alphabet=None, maxlen: int = 4,
             right_alphabet=None, limit: int = 5) -> WfReport:
    """For the singleton class {prop}: the universal image of ``prop`` agrees
    with ``prop`` itself on every left trace up to ``maxlen``."""
    alpha = tuple(alphabet if alphabet is not None else rel.left_alphabet)
    ralpha = tuple(right_alphabet if right_alphabet is not None else rel.right_alphabet)
    report = WfReport(rel.name, prop, maxlen)
    for t in all_traces(alpha, maxlen):
        report.checked += 1
        source_ok = satisfies(prop, t, rel.left_model)
        bad = sigma_counterexample(rel, prop, t, ralpha, maxlen)
        if source_ok and bad is not None:
            report.counterexamples.append((t, bad))
        elif not source_ok and bad is None and images(rel, t, ralpha, maxlen)[0]:
            # prop rejects t, yet every related image passes
            report.counterexamples.append((t, ()))
        if len(report.counterexamples) >= limit:
            break
    return report


# ------------------------------------------------------------------ built-ins

def _ghostify(sec: Optional[str]) -> Optional[str]:
    return "high:NONE" if sec == "high" else sec


def _same(e: Optional[Event], env: dict):
    return (Fixed(e),)


def _is(kind: str, **tags) -> Pred:
    def pred(e: Event) -> bool:
        if e.kind != kind:
            return False
        return all(getattr(e, k) == v for k, v in tags.items())
    return pred


EQ_RULES = (Rule("eq", True, _same),)


def _alphabet_ms():
    return tuple(Event(*a) for a in (
        ("Alloc", 0, 1, "comp"), ("Get", 0, 0, "comp"), ("Get", 0, 1, "comp"),
        ("Set", 0, 0, "comp"), ("Dealloc", 0, None, "comp"), ("Get", 0, 0, "ctx"))) + (
        Event(CRASH),)


def _alphabet_ct():
    return tuple(Event(*a) for a in (
        ("Alloc", 0, 1, "comp", "low"), ("Get", 0, 0, "comp", "low"),
        ("Get", 0, 0, "comp", "high"), ("iGet", 0, 0, "comp", "low"),
        ("Branch", None, 0, "comp", "low"), ("Branch", None, 1, "comp", "high"),
        ("Binop", None, 1, "comp", "low"), ("Dealloc", 0, None, "comp", "low")))


def _alphabet_ghost():
    base = tuple(e.replace(sec=_ghostify(e.sec)) for e in _alphabet_ct())
    return base + (
        spec_event("Spec", "comp", "low"), spec_event("Barrier", "comp", "low"),
        spec_event("Rlb", "comp", "low"), spec_event("Spec", "ctx", "low"),
        spec_event("Rlb", "ctx", "low"), Event("Get", 0, 1, "comp", "high:PHT"))


def mk_equality(model: str = "ms", name: str = "eq") -> TraceRelation:
    alpha = {"ms": _alphabet_ms, "ct": _alphabet_ct, "ghost": _alphabet_ghost}.get(model, _alphabet_ms)()
    return TraceRelation(name, model, model, EQ_RULES, None, alpha, alpha)


def mk_rel_tms_trg() -> TraceRelation:
    return mk_equality("ms", "tms-trg")


def _to_low(e, env):
    if e.kind == CRASH:
        return (Fixed(e),)
    if e.sec not in (None, "low"):
        return None
    return (Fixed(e.replace(sec="low")),)


def _drop_low(kinds):
    def image(e, env):
        return (Any1(lambda x: x.kind in kinds and x.sec == "low", f"{'/'.join(kinds)};low"),)
    return image


def mk_rel_ct() -> TraceRelation:
    """Memory-safe events gain a public tag; public Branch/Binop may be
    inserted freely."""
    rules = (Rule("ct-low", True, _to_low),
             Rule("ct-drop", False, _drop_low(("Branch", "Binop"))))
    return TraceRelation("ct", "ms", "ct", rules, None, _alphabet_ms(), _alphabet_ct())


def mk_rel_ghost(include_pht_drop: bool = False) -> TraceRelation:
    def lift(e, env):
        return (Fixed(e.replace(sec=_ghostify(e.sec))),)

    def drop_spec(e, env):
        return (Any1(lambda x: x.kind in ("Spec", "Rlb", "Barrier"), "Spec/Rlb/Barrier"),)

    rules = [Rule("ghost-lift", True, lift), Rule("ghost-drop", False, drop_spec)]
    if include_pht_drop:
        rules.append(Rule("ghost-drop-pht", False,
                          lambda e, env: (Any1(lambda x: x.sec == "high:PHT", "·;high:PHT"),)))
    return TraceRelation("ghost", "ct", "ghost", tuple(rules), None, _alphabet_ct(), _alphabet_ghost())


def _in_bounds(e: Event, env: dict) -> bool:
    return e.loc in env and e.n < env[e.loc]


def mk_rel_trg_ms(env: Optional[dict] = None) -> TraceRelation:
    """Equality, except for component accesses: they relate to themselves
    only when in bounds, and any of them may instead meet a refused check
    (CRASH). Without an explicit environment, sizes are read off the left
    trace's Alloc events."""
    def image(e, sizes):
        if e.kind in ("Get", "Set") and e.ctl == "comp":
            refused = Fixed(CRASH_EVENT)
            if not _in_bounds(e, sizes):
                return (refused,)
            return (Any1(lambda x, same=e: x == same or x.kind == CRASH, f"{e}|CRASH"),)
        return (Fixed(e),)
    return TraceRelation("trg-ms", "ms", "ms", (Rule("trg-ms", True, image),),
                         env, _alphabet_ms(), _alphabet_ms())


def mk_rel_ms_scct() -> TraceRelation:
    """Only public events: Get/Set may become their data-independent twins,
    public Branch/Binop may appear from nowhere."""
    def image(e, env):
        if e.kind == CRASH:
            return (Fixed(e),)
        if e.sec not in (None, "low"):
            return None
        low = e.replace(sec="low")
        if e.kind in ("Get", "Set"):
            twin = low.replace(kind="i" + e.kind)
            return (Any1(lambda x, a=low, b=twin: x == a or x == b, f"{low}|{twin}"),)
        return (Fixed(low),)
    rules = (Rule("ms-scct", True, image),
             Rule("ms-scct-drop", False, _drop_low(("Branch", "Binop"))))
    alpha_right = _alphabet_ct() + (Event("iSet", 0, 0, "comp", "low"),)
    return TraceRelation("ms-scct", "ms", "ct", rules, None, _alphabet_ms(), alpha_right)


def _not_comp_pht(x: Event) -> bool:
    return x.kind not in ("Spec", "Rlb") and not (x.ctl == "comp" and x.sec == "high:PHT")


def mk_rel_scct_spec(omega: int = 3) -> TraceRelation:
    """Branches of the component relate only when speculation is stopped by
    a barrier straight away. Context speculation is unconstrained except
    that it may not leak component data."""
    def lift(e, env):
        if e.kind == "Branch" and e.ctl == "comp":
            return None
        return (Fixed(e.replace(sec=_ghostify(e.sec))),)

    def barriered(e, env):
        if e.kind != "Branch" or e.ctl != "comp":
            return None
        return (Fixed(e.replace(sec=_ghostify(e.sec))),) + _blocked_window()

    def blocked(e, env):
        # ct mode on: the Branch itself is silent but speculation still starts
        return _blocked_window()

    def ctx_window(e, env):
        return (Any1(_is("Spec", ctl="ctx"), "Spec;ctx"),
                Many(_not_comp_pht, "ctx-window", omega),
                Any1(lambda x: x.kind == "Rlb", "Rlb"))

    rules = (Rule("spec-lift", True, lift), Rule("spec-branch", True, barriered),
             Rule("spec-silent", False, blocked), Rule("spec-ctx", False, ctx_window))
    # only speculation markers and context material are ever drawn from it
    right = (spec_event("Spec", "comp", "low"), spec_event("Barrier", "comp", "low"),
             spec_event("Rlb", "comp", "low"), spec_event("Spec", "ctx", "low"),
             spec_event("Rlb", "ctx", "low"), Event("Get", 0, 0, "ctx", "low"))
    return TraceRelation("scct-spec", "ct", "ghost", rules, None, _alphabet_ct(), right)


def _blocked_window() -> tuple:
    return (Any1(_is("Spec", ctl="comp"), "Spec;comp"),
            Any1(_is("Barrier", ctl="comp"), "Barrier;comp"),
            Any1(lambda x: x.kind == "Rlb", "Rlb"))


def mk_rel_trg_ms_ghost(env: Optional[dict] = None, omega: int = 3) -> TraceRelation:
    """The bounds-check relation read in a speculative target: every checked
    access now sits behind a fresh, unprotected branch."""
    def window(ctl):
        return (Any1(_is("Spec", ctl=ctl), f"Spec;{ctl}"),
                Many(lambda x: x.sec == "high:PHT", "PHT-window", omega),
                Any1(lambda x: x.kind == "Rlb", "Rlb"))

    def lift(e, env_):
        if e.kind == CRASH or (e.kind in ("Get", "Set") and e.ctl == "comp"):
            return None
        return (Fixed(e),)

    def checked(e, sizes):
        if e.kind in ("Get", "Set") and e.ctl == "comp":
            if not _in_bounds(e, sizes):
                return None
            return (Any1(lambda x, c=e.ctl: x.kind == "Branch" and x.n == 0 and x.ctl == c,
                         "Branch 0"),) + window(e.ctl) + (Fixed(e),)
        if e.kind == CRASH:
            return (Any1(lambda x: x.kind == "Branch" and x.n > 0, "Branch k"),
                    Any1(lambda x: x.kind == "Spec", "Spec"),
                    Many(lambda x: x.sec == "high:PHT", "PHT-window", omega),
                    Any1(lambda x: x.kind == "Rlb", "Rlb"), Fixed(e))
        return None

    alpha = (Event("Branch", None, 0, "comp", "low"), Event("Branch", None, 1, "comp", "low"),
             spec_event("Spec", "comp", "low"), spec_event("Rlb", "comp", "low"),
             Event("Get", 0, 1, "comp", "high:PHT"))
    rules = (Rule("trg-ms-lift", True, lift), Rule("trg-ms-checked", True, checked))
    return TraceRelation("trg-ms", "ghost", "ghost", rules, env, _alphabet_ghost(), alpha)


RELATIONS = {
    "eq": lambda: mk_equality(),
    "ct": mk_rel_ct,
    "ghost": mk_rel_ghost,
    "tms-trg": mk_rel_tms_trg,
    "trg-ms": mk_rel_trg_ms,
    "ms-scct": mk_rel_ms_scct,
    "scct-spec": mk_rel_scct_spec,
}


def resolve_chain(name: str) -> list:
    """``a.b.c`` to a list of relations. Each step is read in the trace model
    its predecessor produces, so the bounds-check relation following a
    speculative one becomes its speculative variant."""
    parts = [p for p in name.split(".") if p]
    if not parts:
        raise ValueError("empty relation name")
    out = []
    for p in parts:
        if p not in RELATIONS:
            raise ValueError(f"unknown relation {p!r}")
        prev = out[-1].right_model if out else None
        if p == "trg-ms" and prev == "ghost":
            out.append(mk_rel_trg_ms_ghost())
        elif p == "eq" and prev is not None:
            out.append(mk_equality(prev))
        else:
            rel = RELATIONS[p]()
            if prev is not None and rel.left_model != prev and {rel.left_model, prev} != {"ms"}:
                raise ValueError(f"relation {p} expects {rel.left_model} traces, "
                                 f"but its predecessor produces {prev}")
            out.append(rel)
    return out


def resolve(name: str) -> TraceRelation:
    rels = resolve_chain(name)
    if len(rels) != 1:
        raise ValueError(f"{name} is a composition; use resolve_chain")
    return rels[0]


# ------------------------------------------------------------------ property translation

@dataclass
class TranslationReport:
    chain: str
    prop: str
    maxlen: int
    checked: int = 0
    witness: Optional[tuple] = None  # (source trace, final image)

    @property
    def ok(self) -> bool:
        return self.witness is None

    def __str__(self):
        if self.ok:
            return f"COHERENT chain={self.chain} prop={self.prop} maxlen={self.maxlen} traces={self.checked}"
        src, img = self.witness
        return (f"INCOHERENT chain={self.chain} prop={self.prop} "
                f"trace=[{' · '.join(map(str, src)) or 'ε'}] "
                f"image=[{' · '.join(map(str, img)) or 'ε'}]")


def check_prop_translation(chain, prop: str, alphabet=None, maxlen: int = 3,
                           image_slack: int = 8) -> TranslationReport:
    """Push each source trace through the chain one relation at a time
    (one ε-insertion per step) and compare the final images' verdicts with
    the source trace's own verdict."""
    rels = resolve_chain(chain) if isinstance(chain, str) else list(chain)
    name = chain if isinstance(chain, str) else ".".join(r.name for r in rels)
    alpha = tuple(alphabet if alphabet is not None else rels[0].left_alphabet)
    report = TranslationReport(name, prop, maxlen)
    for t in all_traces(alpha, maxlen):
        report.checked += 1
        expect = satisfies(prop, t, rels[0].left_model)
        layer = {tuple(t)}
        for rel in rels:
            nxt = set()
            for s in layer:
                found, _ = images(rel, s, rel.right_alphabet, len(s) + image_slack, max_eps=1)
                nxt |= found
            layer = nxt
        for img in sorted(layer, key=lambda x: (len(x), tuple(map(str, x)))):
            if satisfies(prop, img, rels[-1].right_model) != expect:
                report.witness = (tuple(t), img)
                return report
    return report
