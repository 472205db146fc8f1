import pytest
from hypothesis import given
from hypothesis import strategies as st

from secomp.harness import gen_component, gen_context
from secomp.languages import (Abort, Call, Function, GateError, HasT, Ifz, Library, LinearityError,
                              Num, Program, SyntaxErr, Var, check_gate, parse_expr, parse_program,
                              render_expr, render_program, reserved_names, typecheck_ltms)
from secomp.passes import cc_tms_trg


def test_parse_identity():
    lib = parse_program("(fun f (x) x)", "L")
    assert lib == Library("comp", (Function("f", "x", Var("x")),), "L")


def test_barrier_gated():
    with pytest.raises(GateError):
        parse_program("(fun f (x) (barrier))", "scct")
    parse_program("(fun f (x) (barrier))", "ghost")


def test_guard_pattern():
    lib = parse_program("(fun g (x) (ifz (hast x nat) x (abort)))", "L")
    assert lib.functions[0].body == Ifz(HasT(Var("x"), "nat"), Var("x"), Abort())


@pytest.mark.parametrize("text, lang", [
    ("(fun f (x) (pair 1 2))", "tms"),
    ("(fun f (x) (wrdoit on))", "ms"),
    ("(fun f (x) (let-sec s high 1 s))", "L"),
])
def test_gates(text, lang):
    with pytest.raises(GateError):
        parse_program(text, lang)


@pytest.mark.parametrize("text", [
    "(fun f (x)", "(fun f x)", "(fun f (x) (frob 1))", "(fun f (x) (get p))", ")",
])
def test_syntax_errors(text):
    with pytest.raises(SyntaxErr):
        parse_program(text, "ghost")


def test_reserved_names_rejected():
    with pytest.raises(SyntaxErr):
        parse_program("(fun f (x) (let y%idx 1 y%idx))", "L")
    lib = parse_program("(fun f (x) (let y%idx 1 y%idx))", "L", allow_reserved=True)
    assert set(reserved_names(lib)) == {"y%idx"}


def test_program_form():
    prog = parse_program("(lib ctx (fun main (z) (call f 1))) (lib comp (fun f (x) x))", "L")
    assert isinstance(prog, Program)
    assert prog.ctx.functions[0].body == Call("f", Num(1))


def test_typecheck():
    typecheck_ltms(parse_program("(fun f (x) x)", "tms"))
    for body in ("(new p x (seq (delete p) (delete p)))", "(new p x (seq (delete p) (get p 0)))"):
        with pytest.raises(LinearityError):
            typecheck_ltms(parse_program(f"(fun f (x) {body})", "tms"))


def test_typecheck_branches_agree():
    with pytest.raises(LinearityError):
        typecheck_ltms(parse_program("(fun f (x) (new p 1 (ifz x (delete p) 0)))", "tms"))
    typecheck_ltms(parse_program("(fun f (x) (new p 1 (ifz x (delete p) (delete p))))", "tms"))


def test_typecheck_leak():
    with pytest.raises(LinearityError):
        typecheck_ltms(parse_program("(fun f (x) (new p 1 0))", "tms"))


@given(st.integers(0, 10_000), st.integers(1, 6), st.sampled_from(["tms", "L", "scct", "ghost"]))
def test_render_parse_round_trip(seed, size, lang):
    lib = gen_component(seed, size, lang)
    assert parse_program(render_program(lib), lang) == lib
    ctx = gen_context(seed, size, lang, lib.names())
    assert parse_program(render_program(ctx), lang, side="ctx") == ctx


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_generated_tms_typechecks_and_compiles(seed, size):
    lib = gen_component(seed, size, "tms")
    typecheck_ltms(lib)
    check_gate(cc_tms_trg(lib), "L")


def test_expr_round_trip_text():
    text = "(let x (+ 1 2) (ifz x (get p x) (set p 0 (/ x 2))))"
    assert render_expr(parse_expr(text)) == text
