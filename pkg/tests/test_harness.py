import pytest
from hypothesis import given
from hypothesis import strategies as st

from secomp.harness import (Budget, barrier_violation, check_rsat, check_rtp, check_swap,
                            comp_leak, contexts_for, default_seed, gen_component, gen_context,
                            ground_of, replay, reproduce, small_contexts, strncpy_source,
                            swap_identity)
from secomp.languages import (Call, Function, Library, New, Num, Pair, Seq, check_gate,
                              parse_program, reserved_names, typecheck_ltms)
from secomp.passes import Pass, cc_cf, cc_dce, cc_tms_trg, cc_trg_ms, identity
from secomp.properties import check
from secomp.traces import Trace, parse_trace

SMALL = Budget(components=6, contexts=8, size=5)


def test_gen_component():
    lib = gen_component(1, 3, "tms")
    typecheck_ltms(lib)
    assert gen_component(1, 3, "tms") == lib
    one = gen_component(7, 1, "L")
    assert len(one.functions) == 1 and one.functions[0].body == Num(0)
    with pytest.raises(ValueError):
        gen_component(0, 0, "L")


def test_gen_context():
    assert gen_context(3, 1, "L").functions[-1].body == Num(0)
    assert gen_context(3, 4, "L", ["f0", "f1"]) == gen_context(3, 4, "L", ["f0", "f1"])
    pair_call = Call("f0", Pair(Num(17), Num(29)))
    assert any(c.functions[-1].body == pair_call for c in small_contexts(["f0"], "L"))
    assert all(c.functions[-1].body != pair_call for c in small_contexts(["f0"], "tms"))


@given(st.integers(0, 10_000), st.integers(1, 6), st.sampled_from(["tms", "L", "scct", "ghost"]),
       st.booleans())
def test_contexts_are_legal(seed, size, lang, secrets):
    comp = gen_component(seed, size, lang)
    for ctx in contexts_for(comp, lang, 12, size, seed, secrets):
        check_gate(ctx, lang)
        assert reserved_names(ctx) == []
        assert ctx.lookup("main") is not None


def test_budget_validation():
    with pytest.raises(ValueError):
        Budget(components=0)
    with pytest.raises(ValueError):
        Budget(omega=-1)


def test_seed_override(monkeypatch):
    assert default_seed(4) == 4
    monkeypatch.setenv("SCC_SEED", "99")
    assert default_seed(4) == 99


def test_rsat():
    rep = check_rsat(gen_component(2, 5, "tms"), "tms", SMALL)
    assert rep.ok and rep.runs == SMALL.contexts
    double = parse_program("(fun f0 (x) (new p 1 (seq (delete p) (delete p))))", "L")
    rep = check_rsat(double, "tms", SMALL)
    assert not rep.ok
    cex = rep.counterexamples[0]
    assert replay(cex, "L", SMALL) == cex.trace
    assert check_rsat(Library("comp", (), "L"), "tms", SMALL).ok


def test_rtp_small():
    for p, prop in ((cc_tms_trg, "tms"), (cc_trg_ms, "sms")):
        rep = check_rtp(p, prop, SMALL)
        assert rep.ok and rep.unrelated == 0, rep.line()
        assert rep.line().startswith(f"PASS {p.name} prop={prop} N=6 M=8 result=OK")


@pytest.mark.parametrize("lang, prop", [("L", "ms"), ("scct", "scct"), ("ghost", "specms")])
def test_identity_never_fails(lang, prop):
    assert check_rtp(identity(lang), prop, SMALL).ok


def _planted(lib):
    # every function first reads past a fresh one-cell block
    oob = New("z", Num(1), New("w", Num(4), parse_program("(fun g (x) (get z 2))", "L")
                                               .functions[0].body))
    return Library(lib.side, tuple(Function(f.name, f.param, Seq(oob, f.body))
                                   for f in lib.functions), lib.lang)


def test_rtp_finds_broken_pass_and_replays():
    broken = Pass("broken", "L", "ms", _planted, "eq")
    rep = check_rtp(broken, "sms", SMALL, relate=False)
    assert not rep.ok and "result=CEX" in rep.line()
    cex = rep.counterexamples[0]
    again = reproduce(broken, SMALL, cex.component, cex.context)
    assert again == cex.trace
    assert not check("sms", ground_of(again)).ok


def test_more_contexts_only_find_more():
    broken = Pass("broken", "L", "ms", _planted, "eq")
    few = check_rtp(broken, "sms", Budget(components=3, contexts=1, size=4), relate=False)
    more = check_rtp(broken, "sms", Budget(components=3, contexts=6, size=4), relate=False)
    if not few.ok:
        assert not more.ok
    assert len(more.counterexamples) >= len(few.counterexamples)


def test_swap():
    rep = check_swap(cc_cf, cc_dce, SMALL)
    assert rep.ok, rep.line()
    assert swap_identity("ms", SMALL).ok
    with pytest.raises(ValueError):
        check_swap(cc_cf, cc_trg_ms, SMALL)


def test_phase_ordering_program():
    # both single-round orders end in the same behaviour
    src = parse_program("(fun f0 (x) (let a 0 (ifz a 1 2)))", "ms")
    rep = check_swap(cc_cf, cc_dce, SMALL, sources=lambda i, b: src)
    assert rep.ok


def test_barrier_violation():
    good = parse_trace("Branch 0;comp;low\nSpec;comp;low\nBarrier;comp;low\nRlb;comp;low\n", "ghost")
    assert barrier_violation(good) is None
    bad = parse_trace("Branch 0;comp;low\nSpec;comp;low\nGet l0 1;comp;high:PHT\nRlb;comp;low\n",
                      "ghost")
    assert barrier_violation(bad) is not None
    assert barrier_violation(Trace("ghost")) is None


def test_comp_leak():
    assert comp_leak(parse_trace("iGet l0 0;comp;high\nBranch 1;ctx;high\n", "ct")) is None
    assert comp_leak(parse_trace("Get l0 0;comp;high\n", "ct")) is not None
    assert comp_leak(parse_trace("Binop 1;comp;low\n", "ct")) is not None


def test_strncpy_source_parses():
    for active in (True, False):
        ctx, comp = strncpy_source(active)
        parse_program(ctx, "scct", side="ctx")
        lib = parse_program(comp, "scct")
        assert lib.names() == ["strncpy"]
