import pytest
from hypothesis import given
from hypothesis import strategies as st

from secomp.harness import contexts_for, gen_component, strncpy_trace
from secomp.languages import Library, parse_program
from secomp.passes import cc_ms_scct, cc_scct_spec, cc_trg_ms
from secomp.semantics import LinkError, link, run, run_libs
from secomp.traces import CRASH_EVENT, alloc, branch, get


def prog(ctx: str, comp: str, lang: str):
    return link(parse_program(ctx, lang, side="ctx"), parse_program(comp, lang), lang)


def test_link_errors():
    ctx = parse_program("(fun main (z) 0)", "L", side="ctx")
    comp = parse_program("(fun f (x) x)", "L")
    link(ctx, comp, "L")
    with pytest.raises(LinkError):
        link(ctx, ctx, "L")
    with pytest.raises(LinkError):
        link(ctx.with_lang("tms"), comp, None)
    with pytest.raises(LinkError):
        link(parse_program("(fun g (z) 0)", "L", side="ctx"), comp, "L")
    with pytest.raises(LinkError):
        link(ctx, parse_program("(fun main (x) x)", "L"), "L")


def test_constant_program():
    trace, out = run(prog("(fun main (z) 42)", "(fun f (x) x)", "L"))
    assert trace.events == () and str(out) == "done 42"


def test_gross_out_of_bounds_crashes():
    trace, out = run(prog("(fun main (z) (call f 0))", "(fun f (x) (new x 2 (get x 5)))", "L"))
    assert trace.events == (alloc(0, 2, "comp"), CRASH_EVENT)
    assert out.kind == "crashed"


def test_unchecked_access_reaches_neighbour():
    comp = "(fun f (x) (new a 2 (new b 2 (seq (set b 0 7) (get a 2)))))"
    trace, out = run(prog("(fun main (z) (call f 0))", comp, "L"))
    assert trace.events[-1] == get(0, 2, "comp")
    assert str(out) == "done 7"


def test_use_after_free_reads_stale_cell():
    comp = "(fun f (x) (new a 1 (seq (set a 0 9) (seq (delete a) (get a 0)))))"
    trace, out = run(prog("(fun main (z) (call f 0))", comp, "L"))
    assert [e.kind for e in trace] == ["Alloc", "Set", "Dealloc", "Get"]
    assert str(out) == "done 9"


def test_abort_and_fuel():
    _, out = run(prog("(fun main (z) (call f 0))", "(fun f (x) (abort))", "L"))
    assert out.kind == "crashed"
    _, out = run(prog("(fun main (z) (call main z))", "(fun f (x) x)", "L"), fuel=1)
    assert out.kind == "fuel_exhausted"
    _, out = run(prog("(fun main (z) (call main z))", "(fun f (x) x)", "L"), fuel=500)
    assert out.kind == "fuel_exhausted"


def test_wrdoit_is_silent():
    trace, out = run(prog("(fun main (z) (wrdoit off))", "(fun f (x) x)", "scct"))
    assert trace.events == () and str(out) == "done 0"


def test_rddoit():
    comp = "(fun f (x) (seq (wrdoit on) (rddoit d d)))"
    _, out = run(prog("(fun main (z) (call f 0))", comp, "scct"))
    assert str(out) == "done 0"
    _, out = run(prog("(fun main (z) (rddoit d d))", comp, "scct"))
    assert str(out) == "done 1"


def test_division_emits_binop():
    trace, out = run(prog("(fun main (z) (call f 0))", "(fun f (x) (+ (/ 7 2) (* 2 3)))", "scct"))
    assert [e.kind for e in trace] == ["Binop"] and trace[0].n == 3
    assert str(out) == "done 9"
    trace, out = run(prog("(fun main (z) (call f 0))", "(fun f (x) (/ 1 0))", "scct"))
    assert out.kind == "crashed"


def test_secret_read_in_ct_mode():
    comp = "(fun f (x) (seq (wrdoit on) (new a 2 (let-sec s high a (get s 0)))))"
    trace, _ = run(prog("(fun main (z) (call f 0))", comp, "scct"))
    assert str(trace[-1]) == "iGet l0 0;comp;high"


def test_speculation_rolls_back():
    comp = "(fun f (i) (new a 2 (ifz (- (+ i 1) 2) (get a i) (abort))))"
    trace, out = run(prog("(fun main (z) (call f 5))", comp, "ghost"), omega=3)
    kinds = [str(e) for e in trace]
    assert kinds[:4] == ["Alloc l0 2;comp;low", "Branch 4;comp;low", "Spec;comp;low",
                         "Get l0 5;comp;high:PHT"]
    assert kinds[4].startswith("Rlb") and out.kind == "crashed"


def test_window_zero():
    comp = "(fun f (i) (ifz i 1 2))"
    trace, out = run(prog("(fun main (z) (call f 0))", comp, "ghost"), omega=0)
    assert [e.kind for e in trace] == ["Branch", "Spec", "Rlb"]
    assert str(out) == "done 1"


def test_strncpy_inactive_prefix():
    t = strncpy_trace(active=False)
    assert [str(e) for e in t][:4] == ["Alloc l0 12;comp;low", "Alloc l1 12;comp;low",
                                       "Get l0 0;comp;high", "Branch 0;comp;high"]


def _runs(seed, lang, size=5, contexts=4, secrets=True, comp=None):
    comp = comp or gen_component(seed, size, lang)
    for ctx in contexts_for(comp, lang, contexts, size, seed, secrets):
        yield ctx, comp, run_libs(ctx, comp, lang)


@given(st.integers(0, 5000), st.sampled_from(["L", "scct", "ghost"]))
def test_deterministic(seed, lang):
    for ctx, comp, result in _runs(seed, lang, contexts=2):
        assert run_libs(ctx, comp, lang) == result


def _owners(trace):
    owner = {}
    for e in trace:
        if e.kind == "Alloc":
            owner[e.loc] = e.ctl
    return owner


@given(st.integers(0, 5000), st.sampled_from(["L", "ghost"]))
def test_sandbox_isolation(seed, lang):
    # generated contexts never receive component pointers, so no event
    # touches a location owned by the other side
    for _, _, (trace, _) in _runs(seed, lang):
        owner = _owners(trace)
        for e in trace:
            if e.loc is not None and e.loc in owner and e.kind != "Alloc":
                assert owner[e.loc] == e.ctl, str(trace)


@given(st.integers(0, 5000), st.sampled_from([0, 1, 3, 5]))
def test_speculation_window(seed, omega):
    comp = gen_component(seed, 5, "ghost")
    for ctx in contexts_for(comp, "ghost", 3, 5, seed, True):
        trace, _ = run_libs(ctx, comp, "ghost", omega=omega)
        inside, count = False, 0
        for e in trace:
            if e.kind == "Spec":
                assert not inside  # depth-1 speculation
                inside, count = True, 0
            elif e.kind == "Rlb":
                inside = False
            elif inside and e.kind != "Barrier" and e.kind != "Crash":
                count += 1
                assert count <= omega


@given(st.integers(0, 5000))
def test_ct_mode_hides_control_flow(seed):
    comp = cc_ms_scct(cc_trg_ms(gen_component(seed, 5, "L")))
    for ctx in contexts_for(comp, "scct", 4, 5, seed, True):
        trace, _ = run_libs(ctx, comp, "scct")
        for e in trace:
            if e.ctl == "comp":
                assert e.kind not in ("Branch", "Binop", "Get", "Set"), str(e)


@given(st.integers(0, 5000))
def test_barriers_follow_branches(seed):
    comp = cc_scct_spec(cc_ms_scct(cc_trg_ms(gen_component(seed, 5, "L"))))
    for ctx in contexts_for(comp, "ghost", 3, 5, seed, True):
        trace, _ = run_libs(ctx, comp, "ghost")
        evs = list(trace)
        for i, e in enumerate(evs):
            if e.kind == "Spec" and e.ctl == "comp":
                assert i + 1 < len(evs) and evs[i + 1].kind == "Barrier", str(trace)


def test_empty_component_library():
    ctx = parse_program("(fun main (z) (new q 1 (get q 0)))", "L", side="ctx")
    trace, out = run_libs(ctx, Library("comp", (), "L"), "L")
    assert all(e.ctl == "ctx" for e in trace) and str(out) == "done 0"
    assert branch(0, "comp") not in trace.events
