"""Source language core: types, expressions, patterns, programs and the
generic utilities every later stage leans on (free variables, type
substitution, alpha-equivalence, fresh names, pretty-printing)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Union


@dataclass(frozen=True)
class Loc:
    line: int
    col: int

    def __str__(self):
        return f"{self.line}:{self.col}"


# --------------------------------------------------------------------------
# Types

class SType:
    __slots__ = ()


INT_WIDTHS = (32, 64, 128, 256)


@dataclass(frozen=True)
class IntType(SType):
    signed: bool
    width: int

    def __post_init__(self):
        if self.width not in INT_WIDTHS:
            raise ValueError(f"bad integer width {self.width}")

    @property
    def min(self) -> int:
        return -(1 << (self.width - 1)) if self.signed else 0

    @property
    def max(self) -> int:
        return (1 << (self.width - 1)) - 1 if self.signed else (1 << self.width) - 1


@dataclass(frozen=True)
class StringType(SType):
    pass


@dataclass(frozen=True)
class ByStrType(SType):
    pass


@dataclass(frozen=True)
class ByStrXType(SType):
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("ByStrX needs X >= 1")


@dataclass(frozen=True)
class ADTType(SType):
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class MapType(SType):
    key: SType
    value: SType


@dataclass(frozen=True)
class FunType(SType):
    """Function type; ``params`` has exactly one entry before uncurrying."""
    params: tuple
    result: SType


@dataclass(frozen=True)
class TypeVar(SType):
    name: str


@dataclass(frozen=True)
class Forall(SType):
    var: str
    body: SType


@dataclass(frozen=True)
class MessageType(SType):
    pass


@dataclass(frozen=True)
class TableType(SType):
    """Runtime type of a polymorphic value after monomorphization: a
    dispatch table paired with its environment."""


def fun_type(*ts: SType) -> SType:
    """Curried arrow: fun_type(A, B, C) == A -> B -> C."""
    t = ts[-1]
    for p in reversed(ts[:-1]):
        t = FunType((p,), t)
    return t


INT32 = IntType(True, 32)
UINT32 = IntType(False, 32)
STRING = StringType()
BYSTR = ByStrType()
MESSAGE = MessageType()
BOOL = ADTType("Bool")

PRIM_NAMES = {
    **{f"Int{w}": IntType(True, w) for w in INT_WIDTHS},
    **{f"Uint{w}": IntType(False, w) for w in INT_WIDTHS},
    "String": STRING,
    "ByStr": BYSTR,
    "Message": MESSAGE,
}


def prim_type_named(name: str) -> Optional[SType]:
    if name in PRIM_NAMES:
        return PRIM_NAMES[name]
    if name.startswith("ByStr") and name[5:].isdigit() and int(name[5:]) >= 1:
        return ByStrXType(int(name[5:]))
    return None


def is_primitive(t: SType) -> bool:
    return isinstance(t, (IntType, StringType, ByStrType, ByStrXType))


def type_free_vars(t: SType) -> set:
    if isinstance(t, TypeVar):
        return {t.name}
    if isinstance(t, ADTType):
        return set().union(*(type_free_vars(a) for a in t.args)) if t.args else set()
    if isinstance(t, MapType):
        return type_free_vars(t.key) | type_free_vars(t.value)
    if isinstance(t, FunType):
        out = type_free_vars(t.result)
        for p in t.params:
            out |= type_free_vars(p)
        return out
    if isinstance(t, Forall):
        return type_free_vars(t.body) - {t.var}
    return set()


def _type_all_vars(t: SType) -> set:
    if isinstance(t, Forall):
        return {t.var} | _type_all_vars(t.body)
    return type_free_vars(t) | _bound_in(t)


def _bound_in(t: SType) -> set:
    if isinstance(t, Forall):
        return {t.var} | _bound_in(t.body)
    if isinstance(t, ADTType):
        return set().union(*(_bound_in(a) for a in t.args)) if t.args else set()
    if isinstance(t, MapType):
        return _bound_in(t.key) | _bound_in(t.value)
    if isinstance(t, FunType):
        out = _bound_in(t.result)
        for p in t.params:
            out |= _bound_in(p)
        return out
    return set()


def is_ground(t: SType) -> bool:
    if isinstance(t, (TypeVar, Forall)):
        return False
    if isinstance(t, ADTType):
        return all(is_ground(a) for a in t.args)
    if isinstance(t, MapType):
        return is_ground(t.key) and is_ground(t.value)
    if isinstance(t, FunType):
        return all(is_ground(p) for p in t.params) and is_ground(t.result)
    return True


def has_forall(t: SType) -> bool:
    if isinstance(t, Forall):
        return True
    if isinstance(t, ADTType):
        return any(has_forall(a) for a in t.args)
    if isinstance(t, MapType):
        return has_forall(t.key) or has_forall(t.value)
    if isinstance(t, FunType):
        return any(has_forall(p) for p in t.params) or has_forall(t.result)
    return False


def type_depth(t: SType) -> int:
    if isinstance(t, ADTType):
        return 1 + max((type_depth(a) for a in t.args), default=0)
    if isinstance(t, MapType):
        return 1 + max(type_depth(t.key), type_depth(t.value))
    if isinstance(t, FunType):
        return 1 + max([type_depth(p) for p in t.params] + [type_depth(t.result)])
    if isinstance(t, Forall):
        return 1 + type_depth(t.body)
    return 1


def subst_type(t: SType, mapping: dict) -> SType:
    """Capture-avoiding substitution of type variables."""
    if not mapping:
        return t
    if isinstance(t, TypeVar):
        return mapping.get(t.name, t)
    if isinstance(t, ADTType):
        if not t.args:
            return t
        return ADTType(t.name, tuple(subst_type(a, mapping) for a in t.args))
    if isinstance(t, MapType):
        return MapType(subst_type(t.key, mapping), subst_type(t.value, mapping))
    if isinstance(t, FunType):
        return FunType(tuple(subst_type(p, mapping) for p in t.params),
                       subst_type(t.result, mapping))
    if isinstance(t, Forall):
        inner = {k: v for k, v in mapping.items() if k != t.var}
        if not inner:
            return t
        incoming = set()
        for k, v in inner.items():
            if k in type_free_vars(t.body):
                incoming |= type_free_vars(v)
        if t.var in incoming:
            used = incoming | _type_all_vars(t.body) | set(inner)
            nv = fresh_name(t.var, used)
            body = subst_type(t.body, {t.var: TypeVar(nv)})
            return Forall(nv, subst_type(body, inner))
        return Forall(t.var, subst_type(t.body, inner))
    return t


def alpha_equal(t1: SType, t2: SType, env1=None, env2=None, depth=0) -> bool:
    """Structural equality up to renaming of forall-bound variables."""
    env1 = env1 or {}
    env2 = env2 or {}
    if isinstance(t1, TypeVar) and isinstance(t2, TypeVar):
        b1, b2 = env1.get(t1.name), env2.get(t2.name)
        if b1 is None and b2 is None:
            return t1.name == t2.name
        return b1 == b2
    if type(t1) is not type(t2):
        return False
    if isinstance(t1, Forall):
        return alpha_equal(t1.body, t2.body, {**env1, t1.var: depth},
                           {**env2, t2.var: depth}, depth + 1)
    if isinstance(t1, ADTType):
        return (t1.name == t2.name and len(t1.args) == len(t2.args)
                and all(alpha_equal(a, b, env1, env2, depth) for a, b in zip(t1.args, t2.args)))
    if isinstance(t1, MapType):
        return (alpha_equal(t1.key, t2.key, env1, env2, depth)
                and alpha_equal(t1.value, t2.value, env1, env2, depth))
    if isinstance(t1, FunType):
        return (len(t1.params) == len(t2.params)
                and all(alpha_equal(a, b, env1, env2, depth) for a, b in zip(t1.params, t2.params))
                and alpha_equal(t1.result, t2.result, env1, env2, depth))
    return t1 == t2


def fresh_name(hint: str, used) -> str:
    if hint not in used:
        return hint
    k = 1
    while f"{hint}_{k}" in used:
        k += 1
    return f"{hint}_{k}"


# --------------------------------------------------------------------------
# Expressions

def _ann():
    return field(default=None, compare=False, repr=False, kw_only=True)


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Lit(Expr):
    value: object
    type: SType
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Var(Expr):
    name: str
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Let(Expr):
    name: str
    decl: Optional[SType]
    bound: Expr
    body: Expr
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Fun(Expr):
    params: tuple          # ((name, SType), ...)
    body: Expr
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class App(Expr):
    fn: Expr
    args: tuple
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class TFun(Expr):
    tvar: str
    body: Expr
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class TApp(Expr):
    fn: Expr
    targ: SType
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Fix(Expr):
    """``fix (f : T) => fun ...``: a recursive function bound to ``f`` in its body."""
    name: str
    ftype: SType
    body: Expr
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Constr(Expr):
    name: str
    targs: tuple
    args: tuple
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Match(Expr):
    scrut: str
    arms: tuple            # ((Pattern, Expr), ...)
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Builtin(Expr):
    op: str
    args: tuple
    targs: tuple = ()
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Msg(Expr):
    fields: tuple          # ((name, Expr), ...)
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class TFunTable(Expr):
    """Monomorphized type abstraction: one specialized body per ground type."""
    tvar: str
    entries: tuple         # ((ground SType, Expr), ...)
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


# --------------------------------------------------------------------------
# Patterns

class Pattern:
    __slots__ = ()


@dataclass(frozen=True)
class Wildcard(Pattern):
    ty: Optional[SType] = _ann()


@dataclass(frozen=True)
class Binder(Pattern):
    name: str
    ty: Optional[SType] = _ann()


@dataclass(frozen=True)
class ConstructorPat(Pattern):
    name: str
    subs: tuple
    ty: Optional[SType] = _ann()


def is_flat(p: Pattern) -> bool:
    if isinstance(p, ConstructorPat):
        return all(isinstance(s, (Wildcard, Binder)) for s in p.subs)
    return True


def pattern_binders(p: Pattern) -> list:
    if isinstance(p, Binder):
        return [p.name]
    if isinstance(p, ConstructorPat):
        out = []
        for s in p.subs:
            out.extend(pattern_binders(s))
        return out
    return []


# --------------------------------------------------------------------------
# Contract statements

class Stmt:
    __slots__ = ()


@dataclass(frozen=True)
class SBind(Stmt):
    name: str
    expr: Expr
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class SLoad(Stmt):
    name: str
    field: str
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class SStore(Stmt):
    field: str
    var: str
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class SMapGet(Stmt):
    name: str
    field: str
    key: str
    ty: Optional[SType] = _ann()
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class SMapExists(Stmt):
    name: str
    field: str
    key: str
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class SMapPut(Stmt):
    field: str
    key: str
    var: str
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class SMapDelete(Stmt):
    field: str
    key: str
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class SMatch(Stmt):
    scrut: str
    arms: tuple            # ((Pattern, (Stmt, ...)), ...)
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class SSend(Stmt):
    var: str
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class SEvent(Stmt):
    var: str
    loc: Optional[Loc] = _ann()


# --------------------------------------------------------------------------
# Programs

@dataclass(frozen=True)
class ADTDecl:
    name: str
    tparams: tuple
    constructors: tuple    # ((cname, (SType, ...)), ...)
    loc: Optional[Loc] = _ann()

    def tag_of(self, cname: str) -> int:
        for i, (c, _) in enumerate(self.constructors):
            if c == cname:
                return i
        raise KeyError(cname)


@dataclass(frozen=True)
class LibDef:
    name: str
    decl: Optional[SType]
    expr: Expr
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Field:
    name: str
    type: SType
    init: Expr
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Transition:
    name: str
    params: tuple          # ((name, SType), ...)
    body: tuple
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Contract:
    name: str
    fields: tuple
    transitions: tuple
    loc: Optional[Loc] = _ann()


@dataclass(frozen=True)
class Program:
    adts: tuple
    lib: tuple
    main: Optional[Expr] = None
    contract: Optional[Contract] = None

    @property
    def is_contract(self) -> bool:
        return self.contract is not None


BUILTIN_ADTS = (
    ADTDecl("Bool", (), (("True", ()), ("False", ()))),
    ADTDecl("Option", ("'A",), (("Some", (TypeVar("'A"),)), ("None", ()))),
    ADTDecl("List", ("'A",), (("Cons", (TypeVar("'A"), ADTType("List", (TypeVar("'A"),)))),
                              ("Nil", ()))),
    ADTDecl("Pair", ("'A", "'B"), (("Pair", (TypeVar("'A"), TypeVar("'B"))),)),
    ADTDecl("Nat", (), (("Zero", ()), ("Succ", (ADTType("Nat"),)))),
)
BUILTIN_ADT_NAMES = frozenset(d.name for d in BUILTIN_ADTS)


class ADTEnv:
    """Lookup tables over all ADT declarations of a program (builtins first)."""

    def __init__(self, decls: Iterable[ADTDecl]):
        self.decls = {}
        self.constructors = {}
        for d in list(BUILTIN_ADTS) + list(decls):
            self.decls[d.name] = d
            for i, (c, fields) in enumerate(d.constructors):
                self.constructors[c] = (d, i, fields)

    def field_types(self, cname: str, adt: ADTType) -> tuple:
        d, _, fields = self.constructors[cname]
        mapping = dict(zip(d.tparams, adt.args))
        return tuple(subst_type(f, mapping) for f in fields)

    def tag(self, cname: str) -> int:
        return self.constructors[cname][1]


# --------------------------------------------------------------------------
# Free variables

def free_vars(e: Expr) -> set:
    out: set = set()
    _fv(e, frozenset(), out)
    return out


def _fv(e, bound, out):
    if isinstance(e, Var):
        if e.name not in bound:
            out.add(e.name)
    elif isinstance(e, Lit):
        pass
    elif isinstance(e, Let):
        _fv(e.bound, bound, out)
        _fv(e.body, bound | {e.name}, out)
    elif isinstance(e, Fun):
        _fv(e.body, bound | {p for p, _ in e.params}, out)
    elif isinstance(e, App):
        _fv(e.fn, bound, out)
        for a in e.args:
            _fv(a, bound, out)
    elif isinstance(e, (TFun, TApp)):
        _fv(e.body if isinstance(e, TFun) else e.fn, bound, out)
    elif isinstance(e, Fix):
        _fv(e.body, bound | {e.name}, out)
    elif isinstance(e, (Constr, Builtin)):
        for a in e.args:
            _fv(a, bound, out)
    elif isinstance(e, Match):
        if e.scrut not in bound:
            out.add(e.scrut)
        for p, body in e.arms:
            _fv(body, bound | set(pattern_binders(p)), out)
    elif isinstance(e, Msg):
        for _, a in e.fields:
            _fv(a, bound, out)
    elif isinstance(e, TFunTable):
        for _, body in e.entries:
            _fv(body, bound, out)
    else:
        raise TypeError(f"free_vars: unexpected node {type(e).__name__}")


def stmts_free_vars(stmts, bound=frozenset()) -> set:
    """Free variables of a statement block (field names excluded)."""
    out: set = set()
    bound = set(bound)

    def use(name):
        if name not in bound:
            out.add(name)

    for s in stmts:
        if isinstance(s, SBind):
            _fv(s.expr, frozenset(bound), out)
            bound.add(s.name)
        elif isinstance(s, SLoad):
            bound.add(s.name)
        elif isinstance(s, SStore):
            use(s.var)
        elif isinstance(s, (SMapGet, SMapExists)):
            use(s.key)
            bound.add(s.name)
        elif isinstance(s, SMapPut):
            use(s.key)
            use(s.var)
        elif isinstance(s, SMapDelete):
            use(s.key)
        elif isinstance(s, SMatch):
            use(s.scrut)
            for p, body in s.arms:
                out |= stmts_free_vars(body, frozenset(bound | set(pattern_binders(p))))
        elif isinstance(s, (SSend, SEvent)):
            use(s.var)
        else:
            raise TypeError(f"unexpected statement {type(s).__name__}")
    return out


def lib_closure(lib, roots, before=None) -> list:
    """Indices of the library definitions transitively needed by free names
    ``roots``; a name resolves to its latest definition before the user."""
    before = len(lib) if before is None else before
    needed, work = set(), [(n, before) for n in roots]
    while work:
        name, limit = work.pop()
        for i in range(limit - 1, -1, -1):
            if lib[i].name == name:
                if i not in needed:
                    needed.add(i)
                    work.extend((n, i) for n in free_vars(lib[i].expr))
                break
    return sorted(needed)


def children(e: Expr) -> list:
    """Direct sub-expressions, in evaluation order."""
    if isinstance(e, Let):
        return [e.bound, e.body]
    if isinstance(e, (Fun, TFun, Fix)):
        return [e.body]
    if isinstance(e, App):
        return [e.fn, *e.args]
    if isinstance(e, TApp):
        return [e.fn]
    if isinstance(e, (Constr, Builtin)):
        return list(e.args)
    if isinstance(e, Match):
        return [b for _, b in e.arms]
    if isinstance(e, Msg):
        return [a for _, a in e.fields]
    if isinstance(e, TFunTable):
        return [b for _, b in e.entries]
    return []


def walk(e: Expr):
    """Pre-order iteration over all expression nodes."""
    stack = [e]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(children(n)))


def walk_stmts(stmts):
    """Yield every expression node reachable from a statement block."""
    for s in stmts:
        if isinstance(s, SBind):
            yield from walk(s.expr)
        elif isinstance(s, SMatch):
            for _, body in s.arms:
                yield from walk_stmts(body)


def program_exprs(p: Program):
    """Every top-level expression of a program: library, main, fields, transitions."""
    for d in p.lib:
        yield from walk(d.expr)
    if p.main is not None:
        yield from walk(p.main)
    if p.contract is not None:
        for f in p.contract.fields:
            yield from walk(f.init)
        for t in p.contract.transitions:
            yield from walk_stmts(t.body)


# --------------------------------------------------------------------------
# Pretty-printing

def show_type(t: SType) -> str:
    if isinstance(t, IntType):
        return f"{'Int' if t.signed else 'Uint'}{t.width}"
    if isinstance(t, StringType):
        return "String"
    if isinstance(t, ByStrType):
        return "ByStr"
    if isinstance(t, ByStrXType):
        return f"ByStr{t.size}"
    if isinstance(t, MessageType):
        return "Message"
    if isinstance(t, TableType):
        return "Table"
    if isinstance(t, TypeVar):
        return t.name
    if isinstance(t, ADTType):
        return " ".join([t.name] + [_type_atom(a) for a in t.args])
    if isinstance(t, MapType):
        return f"Map {_type_atom(t.key)} {_type_atom(t.value)}"
    if isinstance(t, FunType):
        if len(t.params) == 1:
            p = t.params[0]
            lhs = f"({show_type(p)})" if isinstance(p, (FunType, Forall)) else show_type(p)
            return f"{lhs} -> {show_type(t.result)}"
        return f"({', '.join(show_type(p) for p in t.params)}) -> {show_type(t.result)}"
    if isinstance(t, Forall):
        return f"forall {t.var}. {show_type(t.body)}"
    raise TypeError(t)


def _type_atom(t: SType) -> str:
    s = show_type(t)
    if isinstance(t, (FunType, Forall, MapType)) or (isinstance(t, ADTType) and t.args):
        return f"({s})"
    return s


def show_lit(value, t: SType) -> str:
    if isinstance(t, IntType):
        return f"{show_type(t)} {value}"
    if isinstance(t, StringType):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(t, ByStrXType):
        return "0x" + bytes(value).hex()
    if isinstance(t, ByStrType):
        return "ByStr 0x" + bytes(value).hex()
    raise TypeError(t)


def show_pattern(p: Pattern, nested=False) -> str:
    if isinstance(p, Wildcard):
        return "_"
    if isinstance(p, Binder):
        return p.name
    if not p.subs:
        return p.name
    s = " ".join([p.name] + [show_pattern(q, True) for q in p.subs])
    return f"({s})" if nested else s


def _is_atom(e: Expr) -> bool:
    if isinstance(e, (Var, Msg)):
        return True
    if isinstance(e, Lit):
        return not isinstance(e.type, (IntType, ByStrType))
    if isinstance(e, Constr):
        return not e.args and not e.targs
    return False


def show_expr(e: Expr, indent: int = 0) -> str:
    pad = " " * indent
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Lit):
        return show_lit(e.value, e.type)
    if isinstance(e, Let):
        decl = f" : {show_type(e.decl)}" if e.decl is not None else ""
        return (f"let {e.name}{decl} = {show_expr(e.bound, indent + 2)} in\n"
                f"{pad}{show_expr(e.body, indent)}")
    if isinstance(e, Fun):
        ps = ", ".join(f"{n} : {show_type(t)}" for n, t in e.params)
        return f"fun ({ps}) =>\n{pad}  {show_expr(e.body, indent + 2)}"
    if isinstance(e, App):
        head = _atom(e.fn, indent)
        if len(e.args) == 1:
            return f"{head} {_atom(e.args[0], indent)}"
        return f"call {head} ({', '.join(_atom(a, indent) for a in e.args)})"
    if isinstance(e, TFun):
        return f"tfun {e.tvar} =>\n{pad}  {show_expr(e.body, indent + 2)}"
    if isinstance(e, TApp):
        chain = []
        f = e
        while isinstance(f, TApp):
            chain.append(f.targ)
            f = f.fn
        return "@" + _atom(f, indent) + "".join(" " + _type_atom(t) for t in reversed(chain))
    if isinstance(e, Fix):
        return f"fix ({e.name} : {show_type(e.ftype)}) =>\n{pad}  {show_expr(e.body, indent + 2)}"
    if isinstance(e, Constr):
        parts = [e.name]
        if e.targs:
            parts.append("{" + " ".join(_type_atom(t) for t in e.targs) + "}")
        parts.extend(_atom(a, indent) for a in e.args)
        return " ".join(parts)
    if isinstance(e, Match):
        lines = [f"match {e.scrut} with"]
        for p, body in e.arms:
            lines.append(f"{pad}| {show_pattern(p)} =>\n{pad}  {show_expr(body, indent + 2)}")
        lines.append(f"{pad}end")
        return "\n".join(lines)
    if isinstance(e, Builtin):
        if e.op == "emp":
            return f"Emp {_type_atom(e.targs[0])} {_type_atom(e.targs[1])}"
        return " ".join(["builtin", e.op] + [_atom(a, indent) for a in e.args])
    if isinstance(e, Msg):
        fs = "; ".join(f"{n} : {_atom(a, indent)}" for n, a in e.fields)
        return "{" + fs + "}"
    if isinstance(e, TFunTable):
        lines = [f"tfun-table {e.tvar} ["]
        for t, body in e.entries:
            lines.append(f"{pad}  {show_type(t)} =>\n{pad}    {show_expr(body, indent + 4)}")
        lines.append(f"{pad}]")
        return "\n".join(lines)
    raise TypeError(f"show_expr: {type(e).__name__}")


def _atom(e: Expr, indent: int) -> str:
    s = show_expr(e, indent)
    return s if _is_atom(e) else f"({s})"


def show_stmts(stmts, indent: int = 2) -> str:
    pad = " " * indent
    out = []
    for s in stmts:
        if isinstance(s, SBind):
            out.append(f"{pad}{s.name} = {show_expr(s.expr, indent + 2)}")
        elif isinstance(s, SLoad):
            out.append(f"{pad}{s.name} <- {s.field}")
        elif isinstance(s, SStore):
            out.append(f"{pad}{s.field} := {s.var}")
        elif isinstance(s, SMapGet):
            out.append(f"{pad}{s.name} <- {s.field}[{s.key}]")
        elif isinstance(s, SMapExists):
            out.append(f"{pad}{s.name} <- exists {s.field}[{s.key}]")
        elif isinstance(s, SMapPut):
            out.append(f"{pad}{s.field}[{s.key}] := {s.var}")
        elif isinstance(s, SMapDelete):
            out.append(f"{pad}delete {s.field}[{s.key}]")
        elif isinstance(s, SMatch):
            arms = [f"{pad}match {s.scrut} with"]
            for p, body in s.arms:
                inner = show_stmts(body, indent + 2)
                arms.append(f"{pad}| {show_pattern(p)} =>" + (f"\n{inner}" if inner else ""))
            arms.append(f"{pad}end")
            out.append("\n".join(arms))
        elif isinstance(s, SSend):
            out.append(f"{pad}send {s.var}")
        elif isinstance(s, SEvent):
            out.append(f"{pad}event {s.var}")
        else:
            raise TypeError(s)
    return ";\n".join(out)


def show_adt(d: ADTDecl) -> str:
    head = " ".join(["type", d.name, *d.tparams])
    arms = []
    for c, fields in d.constructors:
        if fields:
            arms.append(f"  | {c} of {' '.join(_type_atom(t) for t in fields)}")
        else:
            arms.append(f"  | {c}")
    return head + " =\n" + "\n".join(arms)


def pretty_print(node) -> str:
    """Source text for an expression, a type, an ADT declaration or a whole
    program. Source-stage output parses back to an equal tree."""
    if isinstance(node, Expr):
        return show_expr(node)
    if isinstance(node, SType):
        return show_type(node)
    if isinstance(node, ADTDecl):
        return show_adt(node)
    if isinstance(node, Program):
        return show_program(node)
    raise TypeError(type(node).__name__)


def show_program(p: Program) -> str:
    parts = [show_adt(d) for d in p.adts]
    for d in p.lib:
        decl = f" : {show_type(d.decl)}" if d.decl is not None else ""
        parts.append(f"let {d.name}{decl} =\n  {show_expr(d.expr, 2)}")
    if p.main is not None:
        parts.append(show_expr(p.main))
    if p.contract is not None:
        c = p.contract
        lines = [f"contract {c.name}()"]
        for f in c.fields:
            lines.append(f"field {f.name} : {show_type(f.type)} = {show_expr(f.init, 2)}")
        for t in c.transitions:
            ps = ", ".join(f"{n} : {show_type(ty)}" for n, ty in t.params)
            body = show_stmts(t.body)
            lines.append(f"transition {t.name}({ps})" + (f"\n{body}" if body else "") + "\nend")
        parts.append("\n".join(lines))
    return "\n\n".join(parts) + "\n"


def strip_annotations(node):
    """Copy of an expression/program with every annotation slot cleared."""
    if isinstance(node, Program):
        lib = tuple(replace(d, expr=strip_annotations(d.expr)) for d in node.lib)
        main = strip_annotations(node.main) if node.main is not None else None
        contract = node.contract
        if contract is not None:
            contract = replace(
                contract,
                fields=tuple(replace(f, init=strip_annotations(f.init)) for f in contract.fields),
                transitions=tuple(replace(t, body=_strip_stmts(t.body))
                                  for t in contract.transitions))
        return replace(node, lib=lib, main=main, contract=contract)
    return map_expr(node, lambda e: e, clear=True)


def _strip_stmts(stmts):
    out = []
    for s in stmts:
        if isinstance(s, SBind):
            s = replace(s, expr=strip_annotations(s.expr))
        elif isinstance(s, SMatch):
            s = replace(s, arms=tuple((_strip_pat(p), _strip_stmts(b)) for p, b in s.arms))
        elif hasattr(s, "ty"):
            s = replace(s, ty=None)
        out.append(s)
    return tuple(out)


def _strip_pat(p):
    if isinstance(p, ConstructorPat):
        return ConstructorPat(p.name, tuple(_strip_pat(q) for q in p.subs))
    if isinstance(p, Binder):
        return Binder(p.name)
    return Wildcard()


def map_children(e: Expr, f) -> Expr:
    """Rebuild ``e`` with ``f`` applied to each direct sub-expression."""
    if isinstance(e, Let):
        return replace(e, bound=f(e.bound), body=f(e.body))
    if isinstance(e, (Fun, TFun, Fix)):
        return replace(e, body=f(e.body))
    if isinstance(e, App):
        return replace(e, fn=f(e.fn), args=tuple(f(a) for a in e.args))
    if isinstance(e, TApp):
        return replace(e, fn=f(e.fn))
    if isinstance(e, (Constr, Builtin)):
        return replace(e, args=tuple(f(a) for a in e.args))
    if isinstance(e, Match):
        return replace(e, arms=tuple((p, f(b)) for p, b in e.arms))
    if isinstance(e, Msg):
        return replace(e, fields=tuple((n, f(a)) for n, a in e.fields))
    if isinstance(e, TFunTable):
        return replace(e, entries=tuple((t, f(b)) for t, b in e.entries))
    return e


def map_program(p: Program, fe, fs=None) -> Program:
    """Apply ``fe`` to every top-level expression and ``fs`` (default: ``fe``
    lifted over SBind/SMatch) to every transition body."""
    if fs is None:
        def fs(stmts):
            out = []
            for s in stmts:
                if isinstance(s, SBind):
                    s = replace(s, expr=fe(s.expr))
                elif isinstance(s, SMatch):
                    s = replace(s, arms=tuple((q, fs(b)) for q, b in s.arms))
                out.append(s)
            return tuple(out)
    lib = tuple(replace(d, expr=fe(d.expr)) for d in p.lib)
    main = fe(p.main) if p.main is not None else None
    contract = p.contract
    if contract is not None:
        contract = replace(
            contract,
            fields=tuple(replace(f, init=fe(f.init)) for f in contract.fields),
            transitions=tuple(replace(t, body=fs(t.body)) for t in contract.transitions))
    return replace(p, lib=lib, main=main, contract=contract)


def all_names(p: Program) -> set:
    """Every identifier bound or used anywhere in a program."""
    names = set()

    def pat(q):
        names.update(pattern_binders(q))

    def stmts(ss):
        for s in ss:
            for attr in ("name", "var", "key", "scrut"):
                v = getattr(s, attr, None)
                if isinstance(v, str):
                    names.add(v)
            if isinstance(s, SMatch):
                for q, b in s.arms:
                    pat(q)
                    stmts(b)

    def expr_names(e):
        for n in walk(e):
            if isinstance(n, (Var, Let, Fix)):
                names.add(n.name)
            elif isinstance(n, Fun):
                names.update(x for x, _ in n.params)
            elif isinstance(n, Match):
                names.add(n.scrut)
                for q, _ in n.arms:
                    pat(q)

    for d in p.lib:
        names.add(d.name)
        expr_names(d.expr)
    if p.main is not None:
        expr_names(p.main)
    if p.contract is not None:
        for f in p.contract.fields:
            expr_names(f.init)
        for t in p.contract.transitions:
            names.update(n for n, _ in t.params)
            stmts(t.body)
            for e in walk_stmts(t.body):
                if isinstance(e, (Var, Let, Fix)):
                    names.add(e.name)
                elif isinstance(e, Fun):
                    names.update(x for x, _ in e.params)
                elif isinstance(e, Match):
                    names.add(e.scrut)
                    for q, _ in e.arms:
                        pat(q)
    return names


def map_expr(e: Expr, f, clear=False) -> Expr:
    """Bottom-up rebuild: children first, then ``f`` on the rebuilt node."""
    kw = {"ty": None} if clear else {}
    if isinstance(e, Let):
        e = replace(e, bound=map_expr(e.bound, f, clear), body=map_expr(e.body, f, clear), **kw)
    elif isinstance(e, (Fun, TFun, Fix)):
        e = replace(e, body=map_expr(e.body, f, clear), **kw)
    elif isinstance(e, App):
        e = replace(e, fn=map_expr(e.fn, f, clear),
                    args=tuple(map_expr(a, f, clear) for a in e.args), **kw)
    elif isinstance(e, TApp):
        e = replace(e, fn=map_expr(e.fn, f, clear), **kw)
    elif isinstance(e, (Constr, Builtin)):
        e = replace(e, args=tuple(map_expr(a, f, clear) for a in e.args), **kw)
    elif isinstance(e, Match):
        arms = tuple(((_strip_pat(p) if clear else p), map_expr(b, f, clear)) for p, b in e.arms)
        e = replace(e, arms=arms, **kw)
    elif isinstance(e, Msg):
        e = replace(e, fields=tuple((n, map_expr(a, f, clear)) for n, a in e.fields), **kw)
    elif isinstance(e, TFunTable):
        e = replace(e, entries=tuple((t, map_expr(b, f, clear)) for t, b in e.entries), **kw)
    elif clear:
        e = replace(e, **kw)
    return f(e)


Node = Union[Expr, Stmt]
