import pytest

from helpers import corpus_cases, inputs, interp_text
from minivella.codegen import DescriptorTable
from minivella.core import App, FunType, Let, TFunTable, program_exprs, show_program
from minivella.interp import interpret, program_interface
from minivella.passes.closure import unbound_variables
from minivella.passes.dce import entry_roots, is_pure
from minivella.passes.flatten import flatten_matches, non_flat_patterns
from minivella.passes.mono import residual_type_variables
from minivella.passes.pipeline import STAGES, compile_source
from minivella.passes.uncurry import arity_mismatches
from minivella.core import INT32
from minivella.frontend import parse_expr

CASES = corpus_cases()
ids = [c.name for c in CASES]


def forms(src, until="closure"):
    return compile_source(src, until=until).forms


def lets(e):
    names = []
    while isinstance(e, Let):
        names.append(e.name)
        e = e.body
    return names


# -- dce
def test_dce_drops_unused_pure_let_keeps_failing_one():
    src = """let unused = Int32 1 in
let boom = builtin div (Int32 1) (Int32 0) in
Int32 5"""
    p = forms(src, "dce")["dce"]
    assert lets(p.main) == ["boom"]
    assert "division by zero" in interp_text(p)


def test_dce_removes_unreachable_library():
    src = "let used = Int32 1\nlet unused = Int32 2\nused"
    f = forms(src, "dce")
    assert {d.name for d in f["dce"].lib} == {"used"}
    # the typed program still carries the whole prelude
    assert len(f["typecheck"].lib) > 10


def test_is_pure():
    assert is_pure(parse_expr("Some {Int32} x"))
    assert is_pure(parse_expr("fun (x : Int32) => builtin div x x"))
    assert not is_pure(parse_expr("builtin add x y"))
    assert not is_pure(parse_expr("f x"))


def test_entry_roots_contract():
    src = """let helper = fun (x : Int32) => x
contract C()
field f : Int32 = Int32 0
transition T()
  v <- f;
  w = helper v;
  f := w
end"""
    assert "helper" in entry_roots(forms(src, "typecheck")["typecheck"])


# -- flatten
NESTED = """let z = Int32 0 in
let f = fun (p : List (Option Int32)) =>
  match p with
  | Nil => z
  | Cons (Some x) xs => x
  | Cons _ _ => z
  end
in
let l = Cons {(Option Int32)} (Some {Int32} (Int32 4)) (Nil {(Option Int32)}) in
f l"""


def test_flatten_nested_patterns():
    f = forms(NESTED, "flatten")
    assert non_flat_patterns(f["dce"])
    assert non_flat_patterns(f["flatten"]) == []
    assert interp_text(f["flatten"]) == interp_text(f["typecheck"]) == '{"result":"4"}'


def test_flatten_idempotent():
    p = forms(NESTED, "flatten")["flatten"]
    assert show_program(flatten_matches(p)) == show_program(p)


# -- uncurry
def test_uncurry_two_argument_function():
    src = """let f = fun (a : Int32) => fun (b : Uint32) =>
  let c = builtin to_string b in builtin concat c c
in f (Int32 1) (Uint32 2)"""
    p = forms(src, "uncurry")["uncurry"]
    fn_ty = p.main.bound.ty
    assert isinstance(fn_ty, FunType) and len(fn_ty.params) == 2
    calls = [e for e in program_exprs(p) if isinstance(e, App)]
    assert any(len(c.args) == 2 for c in calls)
    assert arity_mismatches(p) == []


def test_uncurry_keeps_partial_application_correct():
    src = """let f = fun (a : Int32, b : Int32) => builtin sub a b in
let g = f (Int32 10) in
let x = g (Int32 3) in
let y = f (Int32 1) (Int32 2) in
Pair {Int32 Int32} x y"""
    f = forms(src, "uncurry")
    assert arity_mismatches(f["uncurry"]) == []
    assert interp_text(f["uncurry"]) == interp_text(f["typecheck"])


# -- mono
def test_mono_dual_instantiation():
    src = """let id = tfun 'A => fun (x : 'A) => x in
let a = @id Int32 (Int32 1) in
let b = @id String "s" in
Pair {Int32 String} a b"""
    p = forms(src, "mono")["mono"]
    tables = [e for e in program_exprs(p) if isinstance(e, TFunTable)]
    assert len(tables) == 1
    assert sorted(str(t) for t, _ in tables[0].entries) == sorted(
        str(t) for t in (p.main.body.bound.ty, p.main.body.body.bound.ty))
    assert residual_type_variables(p) == []


# -- closure
def test_closure_environment():
    src = "let y = Int32 1 in let f = fun (x : Int32) => builtin add x y in f (Int32 2)"
    cp = forms(src)["closure"]
    lifted = [fd for fd in cp.functions if fd.kind == "fun"]
    assert len(lifted) == 1
    assert [n for n, _ in lifted[0].env] == ["y"]
    assert interp_text(cp) == '{"result":"3"}'


# -- invariants and stage-wise agreement over the corpus
@pytest.mark.parametrize("case", CASES, ids=ids)
def test_invariants(case):
    f = forms(case.source)
    assert non_flat_patterns(f["flatten"]) == []
    assert non_flat_patterns(f["mono"]) == []
    assert arity_mismatches(f["uncurry"]) == []
    assert arity_mismatches(f["mono"]) == []
    assert residual_type_variables(f["mono"]) == []
    for fd in f["closure"].functions:
        assert unbound_variables(fd) == set(), fd.name


@pytest.mark.parametrize("case", CASES, ids=ids)
def test_every_stage_agrees(case):
    f = forms(case.source)
    table = DescriptorTable(f["typecheck"].adts)
    outs = {}
    for stage in STAGES[1:-1]:
        prog = f[stage]
        kw = inputs(case, program_interface(prog), table)
        outs[stage] = interpret(prog, **kw).text(table)
    assert len(set(outs.values())) == 1, outs


def test_dce_literal_examples():
    p = forms("let x = Int32 5 in Int32 7", "dce")["dce"]
    assert show_program(p).strip() == "Int32 7"
    src = "let x = builtin div (Int32 1) (Int32 0) in Int32 7"
    f = forms(src, "dce")
    assert f["dce"].main == f["typecheck"].main       # unchanged: removal could hide the error


def test_dce_library_example():
    p = forms("let f = Int32 1\nlet g = Int32 2\nf", "dce")["dce"]
    assert [d.name for d in p.lib] == ["f"]


def test_flatten_already_flat_is_identical():
    src = """let z = Int32 0 in
let o = Some {Int32} (Int32 3) in
match o with
| Some x => x
| None => z
end"""
    f = forms(src, "flatten")
    assert show_program(f["flatten"]) == show_program(f["dce"])


def test_uncurry_mixed_use_stays_unary():
    src = """let f = fun (a : Int32) => fun (b : Int32) => builtin sub a b in
let g = f (Int32 10) in
let x = g (Int32 3) in
let y = f (Int32 1) (Int32 2) in
Pair {Int32 Int32} x y"""
    f = forms(src, "uncurry")
    ft = f["uncurry"].main.bound.ty
    assert isinstance(ft, FunType) and len(ft.params) == 1
    calls = [e for e in program_exprs(f["uncurry"]) if isinstance(e, App)]
    assert all(len(c.args) == 1 for c in calls)
    assert interp_text(f["uncurry"]) == '{"result":{"constructor":"Pair","argtypes":["Int32","Int32"],' \
        '"arguments":["7","-1"]}}'


def test_mono_single_instantiation():
    src = "let id = tfun 'A => fun (a : 'A) => a in (@id Int32) (Int32 5)"
    p = forms(src, "mono")["mono"]
    (table,) = [e for e in program_exprs(p) if isinstance(e, TFunTable)]
    assert [str(t) for t, _ in table.entries] == [str(INT32)]
    assert interp_text(p) == '{"result":"5"}'


def test_mono_church_agrees_with_interpreter():
    from helpers import BENCHMARKS
    import os
    with open(os.path.join(BENCHMARKS, "church.mvexp")) as fh:
        src = fh.read()
    f = forms(src, "mono")
    assert interp_text(f["mono"]) == '{"result":"131099"}'


def test_closure_examples():
    cp = forms("fun (x : Int32) => x")["closure"]
    (fd,) = [fd for fd in cp.functions if fd.kind == "fun"]
    assert fd.env == ()
    cp = forms("fun (x : Int32) => fun (y : Int32) => builtin add x y")["closure"]
    envs = sorted([n for n, _ in fd.env] for fd in cp.functions if fd.kind == "fun")
    assert envs == [[], ["x"]]
