import pytest

from helpers import corpus_cases, inputs, run_everywhere
from minivella import vm
from minivella.codegen import module_text, parse_module
from minivella.interp import interpret, program_interface
from minivella.passes.pipeline import compile_source
from minivella.runtime.errors import InternalError
from minivella.vm import heap, loader

CASES = corpus_cases()
ids = [c.name for c in CASES]
BACKENDS = sorted(vm.BACKENDS)


def image_of(src):
    return vm.load(compile_source(src).module)


def test_cython_backend_built():
    assert "cython" in vm.BACKENDS
    assert vm.DEFAULT is vm.BACKENDS["cython"]


def test_opcode_tables_agree():
    assert len(loader.OPNAMES) == loader.UNREACHABLE + 1
    assert [getattr(loader, "ARITHOP" if n == "ARITH" else n) for n in loader.OPNAMES] == \
        list(range(len(loader.OPNAMES)))
    if "cython" in vm.BACKENDS:
        from minivella.vm import _cvm
        assert _cvm.OPCODES == tuple(range(len(loader.OPNAMES)))


def test_unknown_backend():
    with pytest.raises(ValueError):
        vm.backend("jit")


def test_load_error_unresolved_function():
    text = module_text(compile_source(
        "let f = fun (x : Int32) => x in f (Int32 1)").module)
    bad = text.replace("fnaddr @f$1", "fnaddr @missing")
    assert bad != text
    with pytest.raises(vm.LoadError, match="missing"):
        vm.load(parse_module(bad))


def test_load_error_undefined_register():
    text = module_text(compile_source(
        "let f = fun (x : Int32) => builtin add x x in f (Int32 1)").module)
    bad = text.replace("add.i32 %x, %x", "add.i32 %x, %ghost")
    assert bad != text
    with pytest.raises(vm.LoadError, match="ghost"):
        vm.load(parse_module(bad))


@pytest.mark.parametrize("be", BACKENDS)
def test_arena_trace_sizes(be):
    img = image_of("""let a = Cons {Int32} (Int32 1) (Nil {Int32}) in
let b = Cons {ByStr20} (ByStr20 0x0000000000000000000000000000000000000001) (Nil {ByStr20}) in
Pair {(List Int32) (List ByStr20)} a b""")
    ctxs = []
    res = vm.execute(img, vm.backend(be), trace=True, context_out=ctxs)
    assert res.error is None
    trace = ctxs[0].arena.trace
    assert ("adt", 13) in trace        # tag + Int32 + reference
    assert ("adt", 29) in trace        # tag + inline ByStr20 + reference
    stats = ctxs[0].arena.stats()
    assert stats["adt"]["count"] == sum(1 for c, _ in trace if c == "adt")


@pytest.mark.parametrize("be", BACKENDS)
def test_debug_bounds_check(be):
    img = image_of("Int32 1")
    arena = vm.backend(be).new_arena(img, debug=True)
    a = arena.alloc(8, heap.ADT)
    arena.check(a, 8)
    with pytest.raises(InternalError, match="out-of-bounds"):
        arena.check(a, 9)
    with pytest.raises(InternalError):
        arena.check(0, 1)


@pytest.mark.parametrize("case", CASES, ids=ids)
def test_backends_agree_with_interpreter(case):
    out = run_everywhere(case.source, case)
    for name, text in out.vm.items():
        assert text == out.interp, name


@pytest.mark.parametrize("case", [c for c in CASES if not c.limits], ids=lambda c: c.name)
def test_debug_mode_runs_clean(case):
    comp = compile_source(case.source)
    table = comp.module.descriptors
    kw = inputs(case, program_interface(comp.typed), table)
    img = vm.load(comp.module)
    ref = vm.execute(img, vm.DEFAULT, **kw).text(table)
    assert vm.execute(img, vm.DEFAULT, debug=True, **kw).text(table) == ref


@pytest.mark.parametrize("be", BACKENDS)
def test_deterministic_and_isolated(be):
    img = image_of("let xs = Cons {String} \"a\" (Nil {String}) in @list_reverse String xs")
    runs = []
    for _ in range(3):
        ctxs = []
        res = vm.execute(img, vm.backend(be), context_out=ctxs)
        runs.append((res.text(img.descriptors), ctxs[0].arena.stats()))
    assert runs[0] == runs[1] == runs[2]


def _length(v):
    n = 0
    while v.constr == "Cons":
        n += 1
        v = v.args[1]
    return n


@pytest.mark.parametrize("be", BACKENDS)
def test_deep_value_conversion_falls_back(be):
    # converting a 5000-element list back to canonical values recurses
    # deeper than the default host limit; the run is redone on a big stack
    src = open(next(c.path for c in CASES if c.name == "long_list")).read()
    src = src.replace("Uint32 300", "Uint32 5000")
    comp = compile_source(src)
    res = vm.execute(vm.load(comp.module), vm.backend(be))
    assert res.error is None
    assert _length(res.value) == 5000
    ref = interpret(comp.typed)
    assert _length(ref.value) == 5000
