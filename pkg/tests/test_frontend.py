import pytest

from helpers import corpus_cases
from minivella.core import ADTType, Fun, IntType
from minivella.core import show_type
from minivella.frontend import CompileError, load_program, parse, tokenize


def diag(src, with_prelude=True):
    with pytest.raises(CompileError) as ei:
        load_program(src, with_prelude)
    (d,) = ei.value.diagnostics
    return d


def test_missing_expression_points_at_in():
    d = diag("let x = in x")
    assert (d.loc.line, d.loc.col) == (1, 9)
    assert "expected an expression" in d.message
    assert d.format("a.mvexp") == "a.mvexp:1:9: error: expected an expression (found 'in')"


def test_diagnostic_line_numbers():
    d = diag("let x = Int32 1 in\nlet y = Uint32 2 in\nbuiltin add x y")
    assert d.loc.line == 3
    assert "type mismatch" in d.message


def test_unterminated_comment_or_string():
    with pytest.raises(CompileError):
        tokenize('"abc')


@pytest.mark.parametrize("src, fragment", [
    ("let x = Int32 1 in builtin add x (Uint32 2)", "expected Int32, got Uint32"),
    ("Int32 99999999999", "out of range for Int32"),
    ("Uint32 -1", "out of range for Uint32"),
    ("let f = fun (x : Int32) => x in f (Int32 1) (Int32 2)", "not a function type"),
    ("y", "unbound identifier y"),
    ("Foo", "unknown constructor Foo"),
    ("let x = ByStr20 0xab in x", "does not have 20 byte(s)"),
    ("Emp (List Int32) Int32", "map key type must be primitive"),
    ("let f = fun (x : Int32) => x in @f Int32 f", "non-polymorphic"),
    ("builtin frobnicate (Int32 1)", "unknown builtin"),
    ("type T = | A | A\nlet z = A in z", "constructor A already defined"),
])
def test_type_errors(src, fragment):
    assert fragment in diag(src).message


def test_non_exhaustive_match():
    d = diag("let x = Some {Int32} (Int32 1) in match x with | Some y => y end")
    assert d.message == "non-exhaustive match; unmatched case: None"


def test_non_exhaustive_nested():
    src = """let l = Nil {(Option Int32)} in
match l with
| Nil => Int32 0
| Cons (Some x) _ => x
end"""
    assert "(Cons None " in diag(src).message


def test_nested_patterns_typing():
    src = """let z = Int32 0 in
fun (p : List (Option Int32)) =>
  match p with
  | Nil => z
  | Cons (Some x) xs => x
  | Cons _ _ => z
  end"""
    p = load_program(src)
    assert show_type(p.main.ty) == "List (Option Int32) -> Int32"


def test_recursive_adt():
    src = """type MyList = | MyNil | MyCons of Int32 MyList
let xs = MyCons (Int32 7) MyNil in
match xs with
| MyCons h _ => h
| MyNil => Int32 0
end"""
    p = load_program(src)
    assert p.main.ty == IntType(True, 32)
    d = next(d for d in p.adts if d.name == "MyList")
    assert d.constructors[1][1][1] == ADTType("MyList")


def test_polymorphic_instantiation():
    src = "let id = tfun 'A => fun (x : 'A) => x in @id String \"s\""
    assert show_type(load_program(src).main.ty) == "String"


def test_multi_param_sugar_is_curried():
    p = parse("fun (a : Int32, b : Uint32) => a")
    assert isinstance(p.main, Fun)
    assert len(p.main.params) == 1 and isinstance(p.main.body, Fun)


def test_contract_checks():
    bad = """contract C()
field f : Int32 -> Int32 = fun (x : Int32) => x
transition T()
end"""
    assert "non-serializable" in diag(bad).message
    bad2 = """contract C()
field f : Int32 = Int32 0
transition T()
  x <- g
end"""
    assert "unknown field g" in diag(bad2).message


def test_prelude_is_linked():
    p = load_program("@list_length Int32 (Nil {Int32})")
    assert show_type(p.main.ty) == "Uint32"
    with pytest.raises(CompileError):
        load_program("@list_length Int32 (Nil {Int32})", with_prelude=False)


@pytest.mark.parametrize("case", corpus_cases(), ids=lambda c: c.name)
def test_corpus_typechecks(case):
    load_program(case.source)


MYLIST_VERBATIM = "type MyList = | Nil | Cons of Int32 MyList\nlet z = Int32 0 in z"


def test_list_decl_with_builtin_names_parses():
    d = parse(MYLIST_VERBATIM).adts[0]
    assert d.name == "MyList"
    assert [(c, len(fs)) for c, fs in d.constructors] == [("Nil", 0), ("Cons", 2)]
    assert d.constructors[1][1] == (IntType(True, 32), ADTType("MyList"))


def test_builtin_constructor_names_collide():
    # constructor names are global and List's Nil/Cons are built in
    assert "constructor Nil already defined" in diag(MYLIST_VERBATIM).message


def test_nested_patterns_parse_shape():
    from minivella.core import ConstructorPat, Match
    e = parse(NESTED_SRC).main
    m = e.body
    assert isinstance(m, Match) and len(m.arms) == 3
    p = m.arms[1][0]

    def depth(q):
        return 1 + max((depth(s) for s in q.subs), default=0) if isinstance(q, ConstructorPat) else 0
    assert depth(p) == 2


NESTED_SRC = """fun (p : List (Option Int32)) =>
  match p with
  | Nil => z
  | Cons (Some x) xs => x
  | Cons _ _ => z
  end"""


def test_identity_and_type_application_types():
    assert show_type(load_program("fun (x : Int32) => x").main.ty) == "Int32 -> Int32"
    p = load_program("let id = tfun 'A => fun (x : 'A) => x in @id Int32")
    assert show_type(p.main.ty) == "Int32 -> Int32"
