import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import traces
from secomp.properties import (PROPERTIES, MonitorViolation, check, check_mct, check_ms,
                               check_scct, check_sms, check_specms, check_ss, check_tms,
                               fresh_state, monitor_step)
from secomp.traces import (ModelError, alloc, branch, dealloc, get, spec_event, use)


def test_monitor_step_examples():
    s = monitor_step("tms", fresh_state("tms"), dealloc(1))
    with pytest.raises(MonitorViolation):
        monitor_step("tms", s, use(1, 9))
    s = monitor_step("sms", fresh_state("sms"), alloc(1, 3))
    monitor_step("sms", s, use(1, 1))
    with pytest.raises(MonitorViolation):
        monitor_step("scct", fresh_state("scct"), branch(0, sec="high"))


def test_monitor_rejects_language_events():
    with pytest.raises(ModelError):
        monitor_step("tms", fresh_state("tms"), get(1, 0, "comp"))
    with pytest.raises(ModelError):
        check("tms", [get(1, 0, "comp")])


def test_monitor_step_leaves_state_alone():
    s = fresh_state("ms")
    monitor_step("ms", s, alloc(1, 2))
    assert monitor_step("ms", s, use(1, 5)) is not None  # l1 unknown in s


def test_tms():
    v = check_tms([dealloc(1), use(1, 1729)])
    assert not v.ok and v.index == 1
    assert check_tms([]).ok
    assert check_tms([alloc(1, 4), use(1, 2), dealloc(1), use(1, 0)]).index == 3


def test_sms():
    assert check_sms([alloc(1, 2), use(1, 2)]).index == 1
    assert check_sms([]).ok
    assert check_sms([alloc(1, 3), use(1, 0), use(1, 2)]).ok


def test_ms():
    assert not check_ms([alloc(1, 2), use(1, 2)]).ok
    assert check_ms([]).ok
    assert check_ms([alloc(1, 1), use(1, 0), dealloc(1)]).ok
    # minimum of the two clause indices
    assert check_ms([dealloc(1), alloc(2, 1), use(2, 1), use(1, 0)]).index == 2


def test_scct():
    assert check_scct([use(1, 0, "high")]).index == 0
    assert check_scct([]).ok
    assert check_scct([alloc(1, 1, sec="low"), branch(0, sec="low")]).ok
    assert check_scct([alloc(1, 1), dealloc(1)]).ok


def test_ss():
    assert check_ss([use(1, 0, "high:PHT")]).index == 0
    assert check_ss([]).ok
    ok = [branch(0, sec="low"), spec_event("Spec", sec="low"), spec_event("Barrier", sec="low"),
          spec_event("Rlb", sec="low"), use(1, 1, "high:NONE")]
    assert check_ss(ok).ok


def test_mct():
    active = [alloc(1, 12, sec="low"), alloc(2, 12, sec="low"), use(1, 0, "low"), use(2, 0, "low")]
    assert check_mct(active).ok
    assert check_mct([]).ok
    assert not check_mct([alloc(1, 2, sec="low"), use(1, 2, "low")]).ok


def test_specms():
    assert check_specms([branch(0, sec="low"), spec_event("Spec", sec="low"),
                         spec_event("Barrier", sec="low"), spec_event("Rlb", sec="low")]).ok
    assert check_specms([]).ok
    assert not check_specms([use(1, 0, "high:PHT")]).ok
    assert not check_specms([use(1, 0, "high:NONE")]).ok


def test_unknown_property():
    with pytest.raises(ValueError):
        check("nope", [])


@pytest.mark.parametrize("prop", ["tms", "sms"])
def test_oracle_agreement_short(prop):
    bad = list(oracles.disagreements(prop, oracles.MEMORY_ALPHABET, 4, check))
    assert bad == []


@pytest.mark.parametrize("prop", ["scct", "ss"])
def test_oracle_agreement_tagged_short(prop):
    bad = list(oracles.disagreements(prop, oracles.TAGGED_ALPHABET, 4, check))
    assert bad == []


@pytest.mark.parametrize("prop", PROPERTIES)
@given(t=traces("ground", crash=False), extra=traces("ground", max_size=4, crash=False))
def test_prefix_stable(prop, t, extra):
    v = check(prop, t)
    if not v.ok:
        w = check(prop, t.events + extra.events)
        assert not w.ok and w.index == v.index


@pytest.mark.parametrize("prop", PROPERTIES)
@given(t=traces("ground", crash=False))
def test_monitor_fold_agrees(prop, t):
    state = fresh_state(prop)
    got = None
    for i, e in enumerate(t):
        try:
            state = monitor_step(prop, state, e)
        except MonitorViolation:
            got = i
            break
    v = check(prop, t)
    assert (got is None) == v.ok
    if got is not None:
        assert v.index == got


@given(traces("ground", crash=False))
def test_ms_is_conjunction(t):
    a, b, m = check_tms(t), check_sms(t), check_ms(t)
    assert m.ok == (a.ok and b.ok)
    if not m.ok:
        assert m.index == min(v.index for v in (a, b) if not v.ok)


@given(traces("ground", crash=False))
def test_specms_is_conjunction(t):
    from secomp.traces import SPEC_KINDS
    stripped = [e.replace(sec="high") if e.sec == "high:NONE" else e
                for e in t if e.kind not in SPEC_KINDS]
    assert check_specms(t).ok == (check_ss(t).ok and check_mct(stripped).ok)


@given(st.lists(st.sampled_from(oracles.MEMORY_ALPHABET), max_size=10))
def test_tms_sms_match_oracle_long(t):
    for prop in ("tms", "sms"):
        want = oracles.ORACLES[prop](t)
        got = check(prop, t)
        assert got.ok == (want is None) and (got.ok or got.index == want)
