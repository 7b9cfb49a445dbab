import pytest
from hypothesis import given, settings, strategies as st

from helpers import corpus_cases
from minivella.core import (
    ADTDecl, ADTType, Forall, FunType, IntType, TypeVar, INT32, UINT32, alpha_equal,
    free_vars, fresh_name, is_flat, pretty_print, fun_type, Binder, ConstructorPat, Wildcard,
)
from minivella.frontend import parse, parse_expr, parse_type

NESTED = """fun (p : List (Option Int32)) =>
  match p with
  | Nil => z
  | Cons (Some x) xs => x
  | Cons _ _ => z
  end"""

MYLIST_DECL = "type MyList = | MyNil | MyCons of Int32 MyList\nlet z = Int32 0 in z"


def test_free_vars_closed():
    assert free_vars(parse_expr("fun (x : Int32) => x")) == set()


def test_free_vars_single():
    assert free_vars(parse_expr("fun (x : Int32) => y")) == {"y"}


def test_free_vars_nested_patterns():
    assert free_vars(parse_expr(NESTED)) == {"z"}


def test_free_vars_excludes_builtins_and_constructors():
    e = parse_expr("fun (x : Int32) => let y = builtin add x k in Some {Int32} y")
    assert free_vars(e) == {"k"}


def test_free_vars_binding_monotone():
    inner = parse_expr("builtin add a b")
    outer = parse_expr("fun (a : Int32) => builtin add a b")
    assert free_vars(outer) <= free_vars(inner) - {"a"} | free_vars(outer)
    assert free_vars(outer) == free_vars(inner) - {"a"}


def test_alpha_equal_examples():
    a = TypeVar("'A")
    b = TypeVar("'B")
    assert alpha_equal(Forall("'A", fun_type(a, a)), Forall("'B", fun_type(b, b)))
    assert not alpha_equal(INT32, UINT32)
    assert not alpha_equal(Forall("'A", fun_type(a, INT32)), Forall("'A", fun_type(INT32, a)))


def test_alpha_equal_free_vars_by_name():
    assert alpha_equal(TypeVar("'A"), TypeVar("'A"))
    assert not alpha_equal(TypeVar("'A"), TypeVar("'B"))
    # a bound variable never equals a free one
    assert not alpha_equal(Forall("'A", TypeVar("'A")), Forall("'B", TypeVar("'A")))


def test_fresh_name_examples():
    assert fresh_name("x", set()) == "x"
    assert fresh_name("x", {"x"}) == "x_1"
    assert fresh_name("x", {"x", "x_1"}) == "x_2"


@given(st.sets(st.sampled_from(["x", "x_1", "x_2", "x_3", "y"])))
def test_fresh_name_not_used(used):
    n = fresh_name("x", used)
    assert n not in used
    assert n == fresh_name("x", set(used))


def test_int_widths_restricted():
    for w in (32, 64, 128, 256):
        IntType(True, w)
    with pytest.raises(ValueError):
        IntType(True, 16)


def test_flat_predicate():
    assert is_flat(Wildcard())
    assert is_flat(Binder("x"))
    assert is_flat(ConstructorPat("Cons", (Binder("x"), Wildcard())))
    assert not is_flat(ConstructorPat("Cons", (ConstructorPat("Some", (Binder("x"),)), Wildcard())))


def test_literal_pretty_print():
    assert pretty_print(parse_expr("Int32 42")) == "Int32 42"


def test_recursive_adt_round_trip():
    p = parse(MYLIST_DECL)
    d = p.adts[0]
    assert d == ADTDecl("MyList", (), (("MyNil", ()), ("MyCons", (INT32, ADTType("MyList")))))
    again = parse(pretty_print(d) + "\nlet z = Int32 0 in z")
    assert again.adts == p.adts


def test_type_round_trip():
    for text in ["Int32", "Map String (List Uint256)", "forall 'A. ('A -> 'A) -> 'A -> 'A",
                 "Pair (Option ByStr20) (Int64 -> Bool)", "ByStr"]:
        t = parse_type(text)
        assert alpha_equal(parse_type(pretty_print(t)), t)


def test_fun_type_curried():
    assert fun_type(INT32, UINT32, INT32) == FunType((INT32,), FunType((UINT32,), INT32))


@pytest.mark.parametrize("case", corpus_cases(), ids=lambda c: c.name)
def test_corpus_pretty_print_round_trip(case):
    p = parse(case.source)
    text = pretty_print(p)
    assert parse(text) == p
    # printing is stable
    assert pretty_print(parse(text)) == text


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_generated_programs_round_trip(seed):
    from progen import generate
    p = parse(generate(seed, max_depth=3))
    assert parse(pretty_print(p)) == p
