import pytest

from helpers import corpus_cases
from minivella.codegen import (
    DescriptorTable, IRError, constructor_layout, layout_of, module_text, parse_module, verify,
)
from minivella.codegen.layout import by_reference
from minivella.core import (
    ADTEnv, ADTType, BUILTIN_ADTS, ByStrXType, FunType, IntType, MapType, STRING, TypeVar,
    INT32,
)
from minivella.passes.pipeline import compile_source

CASES = corpus_cases()
ids = [c.name for c in CASES]
UINT256 = IntType(False, 256)
UINT128 = IntType(False, 128)
BYSTR20 = ByStrXType(20)


def module(src):
    return compile_source(src).module


# -- layouts
@pytest.mark.parametrize("t, size, boxed", [
    (INT32, 4, False),
    (IntType(True, 64), 8, False),
    (UINT128, 16, False),
    (UINT256, 32, False),
    (BYSTR20, 20, False),
    (STRING, 16, False),
    (FunType((INT32,), INT32), 16, False),
    (ADTType("List", (INT32,)), 8, True),
    (MapType(STRING, INT32), 8, True),
])
def test_layout_sizes(t, size, boxed):
    d = layout_of(t)
    assert (d.size, d.boxed) == (size, boxed)


def test_adt_layout_is_packed():
    assert layout_of(ADTType("Bool")).packing == "packed"


def test_layout_rejects_type_variables():
    with pytest.raises(ValueError):
        layout_of(TypeVar("'A"))


def test_constructor_layouts():
    env = ADTEnv(BUILTIN_ADTS)
    cons = constructor_layout(env, "Cons", ADTType("List", (INT32,)))
    assert cons.size == 13
    assert [off for off, _, _ in cons.fields] == [1, 5]
    assert constructor_layout(env, "Cons", ADTType("List", (BYSTR20,))).size == 29
    assert constructor_layout(env, "Nil", ADTType("List", (INT32,))).size == 1


def test_wide_values_go_by_reference():
    assert by_reference(UINT256)
    assert not by_reference(UINT128)
    text = module_text(module("let f = fun (x : Uint256) => builtin add x x in f (Uint256 3)"))
    assert "ptr byref %.p.x" in text and "ptr sret" in text
    text = module_text(module("let f = fun (x : Uint128) => builtin add x x in f (Uint128 3)"))
    assert "byref" not in text


# -- descriptors
def test_descriptor_dedup():
    t = DescriptorTable(BUILTIN_ADTS)
    a = t.intern(ADTType("List", (INT32,)))
    n = len(t)
    assert t.intern(ADTType("List", (INT32,))) == a
    assert len(t) == n
    assert INT32 in t                   # field types are interned too


def test_descriptor_non_ground_rejected():
    with pytest.raises(ValueError):
        DescriptorTable(BUILTIN_ADTS).intern(ADTType("List", (TypeVar("'A"),)))


def test_recursive_adt_descriptor():
    m = module("""type MyList = | MyNil | MyCons of Int32 MyList
let xs = MyCons (Int32 7) MyNil in
match xs with
| MyCons h _ => h
| MyNil => Int32 0
end""")
    t = m.descriptors
    i = t.index(ADTType("MyList"))
    j = t.index(INT32)
    assert t[i].text() == f"adt MyList() MyNil#0() MyCons#1({j},{i})"


@pytest.mark.parametrize("case", CASES, ids=ids)
def test_descriptors_unique(case):
    t = module(case.source).descriptors
    texts = [d.text() for d in t.descriptors]
    assert len(set(texts)) == len(texts)
    assert len(set(t.types)) == len(t.types)


# -- IR text
@pytest.mark.parametrize("case", CASES, ids=ids)
def test_ir_round_trip_and_determinism(case):
    text = module_text(module(case.source))
    assert module_text(module(case.source)) == text
    again = parse_module(text)
    verify(again)
    assert module_text(again) == text


SAMPLE = "let f = fun (x : Uint256) => builtin add x x in f (Uint256 3)"


@pytest.mark.parametrize("mutate, fragment", [
    (lambda s: s.replace("  retvoid\n}\ndefine fun", "}\ndefine fun", 1), "terminator"),
    (lambda s: s.replace("add.u256 %x, %x", "add.u256 %x, %nope"), "undefined register %nope"),
    (lambda s: s.replace("icall.void %.3(%.4, %.5, %.6)", "icall.void %.3(%.4, %.5)"),
     "argument(s) for signature"),
    (lambda s: s.replace("fnaddr @f$1", "fnaddr @g"), "@g"),
    (lambda s: s.replace("(ptr env %.env, ptr sret %.sret, ptr byref", "(ptr sret %.sret, ptr byref"),
     "environment"),
])
def test_verifier_rejects(mutate, fragment):
    text = module_text(module(SAMPLE))
    bad = mutate(text)
    assert bad != text
    with pytest.raises(IRError) as ei:
        verify(parse_module(bad))
    assert fragment in str(ei.value)


MYLIST = """type MyList = | MyNil | MyCons of Int32 MyList
let xs = MyCons (Int32 7) MyNil in
match xs with
| MyCons h _ => h
| MyNil => Int32 0
end"""


def test_int32_only_program_table():
    t = module("Int32 5").descriptors
    assert t.index(INT32) == 0 and t[0].text() == "int i32"


def test_flat_match_lowering_uses_packed_offsets():
    text = module_text(module(MYLIST))
    assert "newobj 13, 1" in text                      # Cons cell: 1 + 4 + 8 bytes, tag 1
    assert "store.i32 %xs, 1," in text and "store.ref %xs, 5," in text
    assert "load.tag %xs, 0" in text
    assert "switch %.1 [1: bb1, 0: bb2]" in text
    assert "load.i32 %xs, 1" in text
    from minivella import vm
    res = vm.execute(vm.load(module(MYLIST)), vm.DEFAULT)
    assert res.value == 7


def test_identity_call_passes_env_and_argument():
    text = module_text(module("let f = fun (x : Int32) => x in f (Int32 5)"))
    (call,) = [ln for ln in text.splitlines() if "icall" in ln]
    assert "sig(env, i32) -> i32" in call
    assert call.split("(", 1)[1].split(")")[0].count(",") == 1     # two actuals


def test_uint256_result_uses_result_slot():
    text = module_text(module("let f = fun (x : Int32) => Uint256 7 in f (Int32 1)"))
    (define,) = [ln for ln in text.splitlines() if ln.startswith("define fun")]
    assert "ptr sret" in define and define.endswith("-> void {")
