"""Closure conversion and statement flattening.

Every function is lifted to a top-level ``FunDef`` that receives its
environment (the captured free variables) alongside its parameters;
function values become ``ClosureMake`` pairs of code and environment, and
applications become ``CallClosure``. Monomorphized type abstractions
become ``DispatchTableDef``s whose entries are zero-parameter thunks
sharing one environment. Nested lets are flattened into ``Bind``
statements in A-normal form: every operand is a variable.

Library definitions are evaluated at the start of each entry point that
needs them (``$main``, ``$init`` and one entry per transition).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from minivella.core import (
    App, Binder, Builtin, Constr, ConstructorPat, Fix, Fun, Let, Lit, Match, Msg, Program, SBind,
    SEvent, SLoad, SMapDelete, SMapExists, SMapGet, SMapPut, SMatch, SSend, SStore, TApp,
    TFunTable, Var, Wildcard, BOOL, free_vars, lib_closure, pattern_binders, show_adt,
    show_lit, show_pattern, show_type, stmts_free_vars,
)
from minivella.interp import (
    FALSE, NONE, TRUE, Interface, builtin_op, stack_overflow, step_limit_error,
)
from minivella.runtime.errors import InternalError
from minivella.runtime.state import Outputs
from minivella.runtime.values import ADTValue, MsgValue


# --------------------------------------------------------------------------
# Closured program form

@dataclass(frozen=True)
class CVar:
    name: str


@dataclass(frozen=True)
class CLit:
    value: object
    type: object


@dataclass(frozen=True)
class ClosureMake:
    fun: str
    captured: tuple


@dataclass(frozen=True)
class TableMake:
    table: str
    captured: tuple


@dataclass(frozen=True)
class SelfClosure:
    """The closure of the running function (for recursive references)."""


@dataclass(frozen=True)
class CallClosure:
    fn: str
    args: tuple


@dataclass(frozen=True)
class TableCall:
    table: str
    targ: object


@dataclass(frozen=True)
class ConstrMake:
    name: str
    type: object
    args: tuple


@dataclass(frozen=True)
class BuiltinOp:
    op: str
    targs: tuple
    args: tuple


@dataclass(frozen=True)
class MsgBuild:
    fields: tuple          # ((name, SType, var), ...)


@dataclass(frozen=True)
class FieldLoad:
    field: str


@dataclass(frozen=True)
class MapGetField:
    field: str
    key: str


@dataclass(frozen=True)
class MapExistsField:
    field: str
    key: str


@dataclass(frozen=True)
class Bind:
    name: str
    ty: object
    rhs: object


@dataclass(frozen=True)
class MatchStmt:
    scrut: str
    ty: object
    arms: tuple            # ((flat Pattern, (stmt, ...)), ...)
    join: Optional[str] = None


@dataclass(frozen=True)
class Return:
    var: Optional[str]


@dataclass(frozen=True)
class StoreField:
    field: str
    var: str


@dataclass(frozen=True)
class MapPutField:
    field: str
    key: str
    var: str


@dataclass(frozen=True)
class MapDeleteField:
    field: str
    key: str


@dataclass(frozen=True)
class Send:
    var: str


@dataclass(frozen=True)
class Event:
    var: str


@dataclass(frozen=True)
class FunDef:
    name: str
    env: tuple             # ((name, SType), ...)
    params: tuple          # ((name, SType), ...)
    result: object         # SType, or None for entries without a value
    body: tuple
    kind: str = "fun"      # fun | thunk | entry
    self_name: Optional[str] = None


@dataclass(frozen=True)
class DispatchTableDef:
    name: str
    tvar: str
    env: tuple
    entries: tuple         # ((ground SType, thunk name), ...)


@dataclass(frozen=True)
class ClosuredProgram:
    adts: tuple
    functions: tuple
    tables: tuple
    fields: tuple = ()                 # ((name, SType), ...)
    transitions: tuple = ()            # ((name, params), ...)
    result_type: object = None
    is_contract: bool = False
    _index: dict = field(default=None, compare=False, repr=False)

    def fun(self, name) -> FunDef:
        idx = self._index
        if idx is None:
            idx = {f.name: f for f in self.functions}
            idx.update({t.name: t for t in self.tables})
            object.__setattr__(self, "_index", idx)
        return idx[name]

    def table(self, name) -> DispatchTableDef:
        return self.fun(name)

    def interface(self) -> Interface:
        return Interface(self.is_contract, result_type=self.result_type, fields=self.fields,
                         transitions=dict(self.transitions), adts=self.adts)


# --------------------------------------------------------------------------
# Conversion

class _Converter:
    def __init__(self):
        self.functions = []
        self.tables = []
        self.counter = 0

    def fresh(self, hint):
        self.counter += 1
        return f"{hint}${self.counter}"

    def tmp(self, scope):
        while True:
            self.counter += 1
            n = f"$t{self.counter}"
            if n not in scope:
                return n

    # -- expressions: conv(e, x) computes e into variable x
    def atom(self, e, scope, out):
        if isinstance(e, Var):
            return e.name
        t = self.tmp(scope)
        out.extend(self.conv(e, t, scope))
        return t

    def conv(self, e, x, scope, hint="lambda"):
        scope[x] = e.ty
        if isinstance(e, Var):
            return [Bind(x, e.ty, CVar(e.name))]
        if isinstance(e, Lit):
            return [Bind(x, e.ty, CLit(e.value, e.type))]
        if isinstance(e, Let):
            out = self.conv(e.bound, e.name, scope, hint=e.name)
            scope[e.name] = e.decl if e.decl is not None else e.bound.ty
            out += self.conv(e.body, x, scope)
            return out
        if isinstance(e, Fun):
            name = self.lift(e, None, scope, hint)
            env = _env_of(e, scope)
            return [Bind(x, e.ty, ClosureMake(name, tuple(n for n, _ in env)))]
        if isinstance(e, Fix):
            name = self.lift(e.body, e, scope, hint)
            env = _env_of(e, scope)
            return [Bind(x, e.ty, ClosureMake(name, tuple(n for n, _ in env)))]
        if isinstance(e, App):
            out = []
            f = self.atom(e.fn, scope, out)
            args = tuple(self.atom(a, scope, out) for a in e.args)
            out.append(Bind(x, e.ty, CallClosure(f, args)))
            return out
        if isinstance(e, TFunTable):
            env = _env_of(e, scope)
            tname = self.fresh(f"{hint}$table")
            entries = []
            for t, body in e.entries:
                th = self.fresh(f"{hint}$at")
                inner = dict(env)
                r = self.tmp(inner)
                stmts = self.conv(body, r, inner, hint=hint)
                stmts.append(Return(r))
                self.functions.append(FunDef(th, tuple(env), (), body.ty, tuple(stmts), "thunk"))
                entries.append((t, th))
            self.tables.append(DispatchTableDef(tname, e.tvar, tuple(env), tuple(entries)))
            return [Bind(x, e.ty, TableMake(tname, tuple(n for n, _ in env)))]
        if isinstance(e, TApp):
            out = []
            f = self.atom(e.fn, scope, out)
            out.append(Bind(x, e.ty, TableCall(f, e.targ)))
            return out
        if isinstance(e, Constr):
            out = []
            args = tuple(self.atom(a, scope, out) for a in e.args)
            out.append(Bind(x, e.ty, ConstrMake(e.name, e.ty, args)))
            return out
        if isinstance(e, Builtin):
            out = []
            args = tuple(self.atom(a, scope, out) for a in e.args)
            out.append(Bind(x, e.ty, BuiltinOp(e.op, tuple(e.targs), args)))
            return out
        if isinstance(e, Msg):
            out = []
            fields = tuple((n, a.ty, self.atom(a, scope, out)) for n, a in e.fields)
            out.append(Bind(x, e.ty, MsgBuild(fields)))
            return out
        if isinstance(e, Match):
            arms = []
            for p, body in e.arms:
                _bind_pattern_types(p, scope)
                arms.append((p, tuple(self.conv(body, x, scope))))
            return [MatchStmt(e.scrut, scope.get(e.scrut), tuple(arms), x)]
        raise InternalError(f"closure conversion: unexpected {type(e).__name__}")

    def lift(self, fn: Fun, fix: Optional[Fix], scope, hint):
        env = _env_of(fix if fix is not None else fn, scope)
        name = self.fresh(hint)
        inner = dict(env)
        inner.update(fn.params)
        body = []
        if fix is not None:
            inner[fix.name] = fix.ftype
            if fix.name in free_vars(fn.body):
                body.append(Bind(fix.name, fix.ftype, SelfClosure()))
        r = self.tmp(inner)
        body += self.conv(fn.body, r, inner, hint=hint)
        body.append(Return(r))
        self.functions.append(FunDef(name, tuple(env), tuple(fn.params), fn.body.ty, tuple(body),
                                     "fun", fix.name if fix is not None else None))
        return name

    # -- statements
    def stmts(self, stmts, scope):
        out = []
        for s in stmts:
            if isinstance(s, SBind):
                out += self.conv(s.expr, s.name, scope, hint=s.name)
            elif isinstance(s, SLoad):
                scope[s.name] = s.ty
                out.append(Bind(s.name, s.ty, FieldLoad(s.field)))
            elif isinstance(s, SStore):
                out.append(StoreField(s.field, s.var))
            elif isinstance(s, SMapGet):
                scope[s.name] = s.ty
                out.append(Bind(s.name, s.ty, MapGetField(s.field, s.key)))
            elif isinstance(s, SMapExists):
                scope[s.name] = BOOL
                out.append(Bind(s.name, BOOL, MapExistsField(s.field, s.key)))
            elif isinstance(s, SMapPut):
                out.append(MapPutField(s.field, s.key, s.var))
            elif isinstance(s, SMapDelete):
                out.append(MapDeleteField(s.field, s.key))
            elif isinstance(s, SMatch):
                arms = []
                for p, body in s.arms:
                    _bind_pattern_types(p, scope)
                    arms.append((p, tuple(self.stmts(body, scope))))
                out.append(MatchStmt(s.scrut, scope.get(s.scrut), tuple(arms), None))
            elif isinstance(s, SSend):
                out.append(Send(s.var))
            elif isinstance(s, SEvent):
                out.append(Event(s.var))
            else:
                raise InternalError(f"closure conversion: unexpected {type(s).__name__}")
        return out

    def library(self, p: Program, roots, scope):
        out = []
        for i in lib_closure(p.lib, roots):
            d = p.lib[i]
            out += self.conv(d.expr, d.name, scope, hint=d.name)
            scope[d.name] = d.decl if d.decl is not None else d.expr.ty
        return out


def _env_of(e, scope):
    return tuple((n, scope[n]) for n in sorted(free_vars(e)))


def _bind_pattern_types(p, scope):
    if isinstance(p, Binder):
        scope[p.name] = p.ty
    elif isinstance(p, ConstructorPat):
        for q in p.subs:
            _bind_pattern_types(q, scope)


def closure_convert(p: Program) -> ClosuredProgram:
    """Input: a monomorphized program (no TFun/TApp on polymorphic values)."""
    cv = _Converter()
    entries = []
    if p.main is not None:
        scope = {}
        body = cv.library(p, free_vars(p.main), scope)
        body += cv.conv(p.main, "$result", scope, hint="main")
        body.append(Return("$result"))
        entries.append(FunDef("$main", (), (), p.main.ty, tuple(body), "entry"))
    fields, transitions = (), ()
    if p.contract is not None:
        c = p.contract
        fields = tuple((f.name, f.type) for f in c.fields)
        transitions = tuple((t.name, tuple(t.params)) for t in c.transitions)
        scope = {}
        roots = set()
        for f in c.fields:
            roots |= free_vars(f.init)
        body = cv.library(p, roots, scope)
        for f in c.fields:
            v = f"$init_{f.name}"
            body += cv.conv(f.init, v, scope, hint=f.name)
        for f in c.fields:
            body.append(StoreField(f.name, f"$init_{f.name}"))
        body.append(Return(None))
        entries.append(FunDef("$init", (), (), None, tuple(body), "entry"))
        for t in c.transitions:
            scope = dict(t.params)
            params = frozenset(n for n, _ in t.params)
            body = cv.library(p, stmts_free_vars(t.body, params), scope)
            body += cv.stmts(t.body, scope)
            body.append(Return(None))
            entries.append(FunDef(t.name, (), tuple(t.params), None, tuple(body), "entry"))
    return ClosuredProgram(
        adts=p.adts, functions=tuple(entries + cv.functions), tables=tuple(cv.tables),
        fields=fields, transitions=transitions,
        result_type=p.main.ty if p.main is not None else None, is_contract=p.is_contract)


# --------------------------------------------------------------------------
# Inspection

def _rhs_uses(rhs):
    if isinstance(rhs, CVar):
        return [rhs.name]
    if isinstance(rhs, (ClosureMake, TableMake)):
        return list(rhs.captured)
    if isinstance(rhs, CallClosure):
        return [rhs.fn, *rhs.args]
    if isinstance(rhs, TableCall):
        return [rhs.table]
    if isinstance(rhs, (ConstrMake, BuiltinOp)):
        return list(rhs.args)
    if isinstance(rhs, MsgBuild):
        return [v for _, _, v in rhs.fields]
    if isinstance(rhs, (MapGetField, MapExistsField)):
        return [rhs.key]
    return []


def unbound_variables(fd: FunDef) -> set:
    """Variables a lifted body reads without a binding from its
    parameters, environment or an earlier statement (expected: none)."""
    bad = set()

    def walk(stmts, bound):
        bound = set(bound)
        for s in stmts:
            uses = []
            if isinstance(s, Bind):
                uses = _rhs_uses(s.rhs)
            elif isinstance(s, MatchStmt):
                uses = [s.scrut]
            elif isinstance(s, Return):
                uses = [s.var] if s.var is not None else []
            elif isinstance(s, (StoreField, Send, Event)):
                uses = [s.var]
            elif isinstance(s, MapPutField):
                uses = [s.key, s.var]
            elif isinstance(s, MapDeleteField):
                uses = [s.key]
            bad.update(u for u in uses if u not in bound)
            if isinstance(s, Bind):
                bound.add(s.name)
            elif isinstance(s, MatchStmt):
                for p, body in s.arms:
                    walk(body, bound | set(pattern_binders(p)))
                if s.join is not None:
                    bound.add(s.join)

    base = {n for n, _ in fd.env} | {n for n, _ in fd.params}
    if fd.self_name:
        base.add(fd.self_name)
    walk(fd.body, base)
    return bad


def _show_rhs(r):
    if isinstance(r, CVar):
        return r.name
    if isinstance(r, CLit):
        return show_lit(r.value, r.type)
    if isinstance(r, ClosureMake):
        return f"closure {r.fun} [{', '.join(r.captured)}]"
    if isinstance(r, TableMake):
        return f"table {r.table} [{', '.join(r.captured)}]"
    if isinstance(r, SelfClosure):
        return "self"
    if isinstance(r, CallClosure):
        return f"call {r.fn} ({', '.join(r.args)})"
    if isinstance(r, TableCall):
        return f"lookup {r.table} @{show_type(r.targ)}"
    if isinstance(r, ConstrMake):
        return " ".join([r.name, *r.args])
    if isinstance(r, BuiltinOp):
        return " ".join(["builtin", r.op, *r.args])
    if isinstance(r, MsgBuild):
        return "{" + "; ".join(f"{n} : {v}" for n, _, v in r.fields) + "}"
    if isinstance(r, FieldLoad):
        return f"load {r.field}"
    if isinstance(r, MapGetField):
        return f"load {r.field}[{r.key}]"
    if isinstance(r, MapExistsField):
        return f"exists {r.field}[{r.key}]"
    raise TypeError(r)


def _show_stmts(stmts, indent):
    pad = " " * indent
    lines = []
    for s in stmts:
        if isinstance(s, Bind):
            lines.append(f"{pad}{s.name} : {show_type(s.ty)} = {_show_rhs(s.rhs)}")
        elif isinstance(s, MatchStmt):
            join = f" -> {s.join}" if s.join else ""
            lines.append(f"{pad}match {s.scrut}{join} {{")
            for p, body in s.arms:
                lines.append(f"{pad}| {show_pattern(p)} =>")
                lines.extend(_show_stmts(body, indent + 2))
            lines.append(f"{pad}}}")
        elif isinstance(s, Return):
            lines.append(f"{pad}return{'' if s.var is None else ' ' + s.var}")
        elif isinstance(s, StoreField):
            lines.append(f"{pad}{s.field} := {s.var}")
        elif isinstance(s, MapPutField):
            lines.append(f"{pad}{s.field}[{s.key}] := {s.var}")
        elif isinstance(s, MapDeleteField):
            lines.append(f"{pad}delete {s.field}[{s.key}]")
        elif isinstance(s, Send):
            lines.append(f"{pad}send {s.var}")
        elif isinstance(s, Event):
            lines.append(f"{pad}event {s.var}")
    return lines


def _show_binds(bs):
    return ", ".join(f"{n} : {show_type(t)}" for n, t in bs)


def show_closured(cp: ClosuredProgram) -> str:
    parts = [show_adt(d) for d in cp.adts]
    for t in cp.tables:
        ents = ", ".join(f"{show_type(ty)} -> {fn}" for ty, fn in t.entries)
        parts.append(f"dispatch {t.name} {t.tvar} env ({_show_binds(t.env)}) [{ents}]")
    for f in cp.functions:
        res = show_type(f.result) if f.result is not None else "()"
        self_ = f" self {f.self_name}" if f.self_name else ""
        head = (f"{f.kind} {f.name} env ({_show_binds(f.env)}) ({_show_binds(f.params)})"
                f" : {res}{self_} {{")
        parts.append("\n".join([head, *_show_stmts(f.body, 2), "}"]))
    return "\n\n".join(parts) + "\n"


# --------------------------------------------------------------------------
# Execution (oracle for the closure-converted stage)

class _Closure:
    __slots__ = ("fun", "env")

    def __init__(self, fun, env):
        self.fun = fun
        self.env = env


class _Table:
    __slots__ = ("table", "env")

    def __init__(self, table, env):
        self.table = table
        self.env = env


class ClosuredInterpreter:
    def __init__(self, prog: ClosuredProgram, stack_limit, step_limit):
        self.prog = prog
        self.stack_limit = stack_limit
        self.step_limit = step_limit
        self.depth = 0
        self.steps = 0
        self.state = None
        self.out = None

    def call(self, fd: FunDef, env_values, args):
        # only source-level function applications count towards the depth
        # bound; entries and type-application thunks do not
        counted = fd.kind == "fun"
        if counted:
            self.depth += 1
            if self.depth > self.stack_limit:
                self.depth = 0
                raise stack_overflow(self.stack_limit)
        try:
            local = dict(zip((n for n, _ in fd.env), env_values))
            local.update(zip((n for n, _ in fd.params), args))
            if fd.self_name:
                local[fd.self_name] = _Closure(fd.name, env_values)
            return self.exec(fd.body, local, fd, env_values)
        finally:
            if counted:
                self.depth -= 1

    def exec(self, stmts, local, fd, env_values):
        for s in stmts:
            self.steps += 1
            if self.steps > self.step_limit:
                raise step_limit_error(self.step_limit)
            if isinstance(s, Bind):
                local[s.name] = self.rhs(s.rhs, local, fd, env_values)
            elif isinstance(s, MatchStmt):
                v = local[s.scrut]
                for p, body in s.arms:
                    if isinstance(p, ConstructorPat):
                        if p.name != v.constr:
                            continue
                        for q, a in zip(p.subs, v.args):
                            if isinstance(q, Binder):
                                local[q.name] = a
                    elif isinstance(p, Binder):
                        local[p.name] = v
                    r = self.exec(body, local, fd, env_values)
                    if r is not _CONTINUE:
                        return r
                    break
                else:
                    raise InternalError("match failure")
            elif isinstance(s, Return):
                return local[s.var] if s.var is not None else None
            elif isinstance(s, StoreField):
                self.state[s.field] = local[s.var]
            elif isinstance(s, MapPutField):
                self.state[s.field] = self.state[s.field].put(local[s.key], local[s.var])
            elif isinstance(s, MapDeleteField):
                self.state[s.field] = self.state[s.field].remove(local[s.key])
            elif isinstance(s, Send):
                self.out.messages.append(local[s.var])
            elif isinstance(s, Event):
                self.out.events.append(local[s.var])
            else:
                raise InternalError(f"unexpected statement {type(s).__name__}")
        return _CONTINUE

    def rhs(self, r, local, fd, env_values):
        if isinstance(r, CVar):
            return local[r.name]
        if isinstance(r, CLit):
            return r.value
        if isinstance(r, ClosureMake):
            return _Closure(r.fun, tuple(local[n] for n in r.captured))
        if isinstance(r, TableMake):
            return _Table(r.table, tuple(local[n] for n in r.captured))
        if isinstance(r, SelfClosure):
            return _Closure(fd.name, env_values)
        if isinstance(r, CallClosure):
            clo = local[r.fn]
            return self.call(self.prog.fun(clo.fun), clo.env, [local[a] for a in r.args])
        if isinstance(r, TableCall):
            tv = local[r.table]
            tdef = self.prog.table(tv.table)
            for t, th in tdef.entries:
                if t == r.targ:
                    return self.call(self.prog.fun(th), tv.env, ())
            raise InternalError("type application has no table entry")
        if isinstance(r, ConstrMake):
            return ADTValue(r.name, tuple(local[a] for a in r.args))
        if isinstance(r, BuiltinOp):
            return builtin_op(r.op, r.targs, [local[a] for a in r.args])
        if isinstance(r, MsgBuild):
            return MsgValue.build([(n, t, local[v]) for n, t, v in r.fields])
        if isinstance(r, FieldLoad):
            return self.state[r.field]
        if isinstance(r, MapGetField):
            m, k = self.state[r.field], local[r.key]
            return ADTValue("Some", (m.get(k),)) if m.contains(k) else NONE
        if isinstance(r, MapExistsField):
            return TRUE if self.state[r.field].contains(local[r.key]) else FALSE
        raise InternalError(f"unexpected operation {type(r).__name__}")

    # -- entries (same protocol as interp.Interpreter)
    def run_main(self, prog):
        return self.call(prog.fun("$main"), (), ())

    def run_init(self, prog):
        self.state = {}
        self.out = Outputs()
        self.call(prog.fun("$init"), (), ())
        return self.state

    def run_transition(self, prog, tname, args, state):
        self.state = dict(state)
        self.out = Outputs()
        self.call(prog.fun(tname), (), list(args))
        return self.state, self.out


_CONTINUE = object()
