import subprocess
import sys

import pytest

from secomp.cli import main
from secomp.harness import strncpy_source
from secomp.languages import parse_program


@pytest.fixture
def files(tmp_path):
    def put(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return put


def call(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out.strip(), out.err


def test_check_violation(capsys, files):
    t = files("t.txt", "Dealloc l1;comp\nUse l1 1729;comp\n")
    code, out, _ = call(capsys, "check", "--prop", "tms", "--trace", t)
    assert code == 1 and out.startswith("VIOLATED 1 ")


def test_check_language_trace(capsys, files):
    t = files("t.txt", "Alloc l0 1;comp\nGet l0 0;comp\nDealloc l0;ctx\n")
    assert call(capsys, "check", "--prop", "ms", "--trace", t)[:2] == (0, "OK")
    t = files("g.txt", "Use l1 0;high:PHT\n")
    code, out, _ = call(capsys, "check", "--prop", "ss", "--trace", t, "--model", "ground")
    assert code == 1 and out.startswith("VIOLATED 0")


def test_check_bad_trace(capsys, files):
    t = files("t.txt", "Frobnicate\n")
    assert call(capsys, "check", "--prop", "tms", "--trace", t)[0] == 2
    assert call(capsys, "check", "--prop", "tms", "--trace", t + ".missing")[0] == 2


def test_relate(capsys, files):
    t = files("a.txt", "Alloc l0 2;comp\nGet l0 1;comp\n")
    assert call(capsys, "relate", "--rel", "tms-trg", "--lhs", t, "--rhs", t)[:2] == (0, "RELATED")
    u = files("b.txt", "Alloc l0 2;comp\nGet l0 0;comp\n")
    assert call(capsys, "relate", "--rel", "tms-trg", "--lhs", t, "--rhs", u)[:2] == (1, "NOT RELATED")
    assert call(capsys, "relate", "--rel", "nope", "--lhs", t, "--rhs", u)[0] == 2


def test_compile_full(capsys, files, tmp_path):
    src = files("c.tms", "(fun f (x) (new p 2 (seq (set p 0 x) (seq (get p x) (delete p)))))\n")
    out = str(tmp_path / "c.ghost")
    code, text, _ = call(capsys, "compile", "--from", "tms", "--chain", "full", "--in", src, "--out", out)
    assert code == 0 and text.endswith("L_tms -> L_ghost")
    # the constant store is proven in bounds and loses its check; the read keeps it
    assert open(out).read() == (
        "(lib comp\n"
        "  (fun f (x) (seq (wrdoit on) (ifz (hast x nat) (seq (barrier) (new p 2 "
        "(seq (set p 0 x) (seq (let p%idx x (ifz (- (+ p%idx 1) 2) (seq (barrier) "
        "(get p p%idx)) (seq (barrier) (abort)))) (delete p))))) (seq (barrier) (abort))))))\n")
    lib = parse_program(open(out).read(), "ghost", allow_reserved=True)
    assert lib.names() == ["f"]


def test_compile_errors(capsys, files, tmp_path):
    src = files("c.tms", "(fun f (x) x)\n")
    out = str(tmp_path / "o")
    code, _, err = call(capsys, "compile", "--from", "tms", "--chain", "scct-spec,trg-ms",
                        "--in", src, "--out", out)
    assert code == 2 and "language mismatch" in err
    assert call(capsys, "compile", "--from", "tms", "--chain", "bogus", "--in", src, "--out", out)[0] == 2
    bad = files("bad.tms", "(fun f (x)\n")
    assert call(capsys, "compile", "--from", "tms", "--chain", "tms-trg", "--in", bad, "--out", out)[0] == 2


def test_compile_orders(capsys, files, tmp_path):
    src = files("branch.ms", "(fun f (x) (let a 0 (ifz a 1 2)))\n")
    outs = []
    for chain in ("cf,dce", "dce,cf"):
        out = str(tmp_path / chain.replace(",", "_"))
        assert call(capsys, "compile", "--from", "ms", "--chain", chain, "--in", src, "--out", out)[0] == 0
        outs.append(open(out).read())
    # a single round of each pass: only cf first removes the branch
    assert "ifz" not in outs[0] and "ifz" in outs[1]


def test_run(capsys, files, tmp_path):
    ctx = files("ctx", "(fun main (z) 0)\n")
    comp = files("comp", "(fun f (x) x)\n")
    tr = str(tmp_path / "tr")
    assert call(capsys, "run", "--lang", "L", "--ctx", ctx, "--comp", comp, "--trace", tr)[:2] == (0, "done 0")
    assert open(tr).read() == ""
    loop = files("loop", "(fun main (z) (call main z))\n")
    assert call(capsys, "run", "--lang", "L", "--ctx", loop, "--comp", comp, "--fuel", "1")[:2] == (
        0, "fuel_exhausted")
    crash = files("crash", "(fun f (x) (abort))\n")
    call_f = files("callf", "(fun main (z) (call f 0))\n")
    assert call(capsys, "run", "--lang", "L", "--ctx", call_f, "--comp", crash)[:2] == (0, "crashed")


def test_run_strncpy(capsys, files, tmp_path):
    ctx_text, comp_text = strncpy_source(active=False)
    tr = str(tmp_path / "tr")
    code, out, _ = call(capsys, "run", "--lang", "scct", "--ctx", files("ctx", ctx_text),
                        "--comp", files("comp", comp_text), "--trace", tr)
    assert code == 0
    lines = open(tr).read().splitlines()
    assert lines[2:4] == ["Get l0 0;comp;high", "Branch 0;comp;high"]


def test_run_errors(capsys, files):
    ctx = files("ctx", "(fun main (z) (barrier))\n")
    comp = files("comp", "(fun f (x) x)\n")
    assert call(capsys, "run", "--lang", "scct", "--ctx", ctx, "--comp", comp)[0] == 2
    noman = files("noman", "(fun g (z) 0)\n")
    assert call(capsys, "run", "--lang", "L", "--ctx", noman, "--comp", comp)[0] == 2
    assert call(capsys, "run", "--lang", "klingon", "--ctx", noman, "--comp", comp)[0] == 2


def test_wf(capsys):
    code, out, _ = call(capsys, "wf", "--rel", "ms-scct", "--prop", "scct", "--maxlen", "3")
    assert code == 0 and out.startswith("WF OK")
    code, out, _ = call(capsys, "wf", "--rel", "scct-spec.trg-ms", "--prop", "ss", "--maxlen", "2")
    assert code == 1 and out.startswith("INCOHERENT")
    assert call(capsys, "wf", "--rel", "nope", "--prop", "ss")[0] == 2


def test_fuzz(capsys, monkeypatch):
    code, out, _ = call(capsys, "fuzz", "--pass", "tms-trg", "--prop", "tms",
                        "--components", "3", "--contexts", "4", "--seed", "5")
    assert code == 0 and out == "PASS tms-trg prop=tms N=3 M=4 result=OK seed=5"
    monkeypatch.setenv("SCC_SEED", "8")
    code, out, _ = call(capsys, "fuzz", "--pass", "id-L", "--prop", "ms",
                        "--components", "2", "--contexts", "2", "--seed", "5")
    assert code == 0 and out.endswith("seed=8")
    assert call(capsys, "fuzz", "--pass", "nope", "--prop", "tms")[0] == 2
    assert call(capsys, "fuzz", "--pass", "cf", "--prop", "tms", "--components", "0")[0] == 2


def test_usage_errors(capsys):
    assert call(capsys, "check", "--prop", "tms")[0] == 2
    assert call(capsys)[0] == 2
    assert call(capsys, "--help")[0] == 0


def test_module_entry(files):
    t = files("t.txt", "Dealloc l1;comp\nUse l1 1729;comp\n")
    res = subprocess.run([sys.executable, "-m", "secomp", "check", "--prop", "tms", "--trace", t],
                         capture_output=True, text=True)
    assert res.returncode == 1 and res.stdout.startswith("VIOLATED 1")
