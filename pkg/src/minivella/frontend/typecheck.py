"""System-F typechecker. Produces a copy of the program where every
expression node, pattern and binder carries its type."""

from __future__ import annotations

from dataclasses import replace

from minivella.core import (
    ADTEnv, ADTType, App, BOOL, Binder, Builtin, ByStrType, ByStrXType, Constr,
    ConstructorPat, Contract, Fix, Forall, Fun, FunType, IntType, LibDef, Let, Lit, Loc,
    MESSAGE, MapType, Match, MessageType, Msg, Program, SBind, SEvent, SLoad, SMapDelete,
    SMapExists, SMapGet, SMapPut, SMatch, SSend, SStore, STRING, StringType, TApp, TFun,
    TFunTable, TableType, TypeVar, UINT32, Var, Wildcard, alpha_equal, fresh_name,
    has_forall, is_primitive, show_type, subst_type, type_free_vars, BUILTIN_ADT_NAMES,
)
from minivella.frontend.parser import CompileError, Diagnostic

ARITH_OPS = ("add", "sub", "mul", "div", "rem")
MAP_OPS = ("put", "get", "contains", "remove", "size")

# Reserved message fields are hoisted into the JSON object and must be strings.
RESERVED_MSG_FIELDS = ("_tag", "_eventname", "_exception", "_recipient")


class TypeErr(Exception):
    def __init__(self, msg, loc=None):
        super().__init__(msg)
        self.loc = loc


def option_of(t):
    return ADTType("Option", (t,))


class Checker:
    def __init__(self, adts):
        self.adts = ADTEnv(adts)
        self.diags = []

    # -- well-formedness
    def check_type(self, t, tvars, loc, allow_forall=True):
        if isinstance(t, TypeVar):
            if t.name not in tvars:
                raise TypeErr(f"unbound type variable {t.name}", loc)
        elif isinstance(t, ADTType):
            d = self.adts.decls.get(t.name)
            if d is None:
                raise TypeErr(f"unknown type {t.name}", loc)
            if len(d.tparams) != len(t.args):
                raise TypeErr(f"type {t.name} expects {len(d.tparams)} argument(s), "
                              f"got {len(t.args)}", loc)
            for a in t.args:
                self.check_type(a, tvars, loc, allow_forall=False)
        elif isinstance(t, MapType):
            self.check_type(t.key, tvars, loc, allow_forall=False)
            self.check_type(t.value, tvars, loc, allow_forall=False)
            if not is_primitive(t.key):
                raise TypeErr(f"map key type must be primitive, not {show_type(t.key)}", loc)
        elif isinstance(t, FunType):
            for p in t.params:
                self.check_type(p, tvars, loc, allow_forall)
            self.check_type(t.result, tvars, loc, allow_forall)
        elif isinstance(t, Forall):
            if not allow_forall:
                raise TypeErr("quantified type not allowed here", loc)
            self.check_type(t.body, tvars | {t.var}, loc, allow_forall)

    def same(self, t1, t2):
        return alpha_equal(t1, t2)

    def expect_same(self, expected, got, loc, what="expression"):
        if not self.same(expected, got):
            raise TypeErr(f"type mismatch in {what}: expected {show_type(expected)}, "
                          f"got {show_type(got)}", loc)

    # -- expressions
    def expr(self, e, env, tvars):
        loc = e.loc
        if isinstance(e, Lit):
            t = e.type
            _check_literal(e.value, t, loc)
            return replace(e, ty=t)
        if isinstance(e, Var):
            if e.name not in env:
                raise TypeErr(f"unbound identifier {e.name}", loc)
            return replace(e, ty=env[e.name])
        if isinstance(e, Let):
            bound = self.expr(e.bound, env, tvars)
            t = bound.ty
            if e.decl is not None:
                self.check_type(e.decl, tvars, loc)
                self.expect_same(e.decl, t, loc, f"binding of {e.name}")
                t = e.decl
            body = self.expr(e.body, {**env, e.name: t}, tvars)
            return replace(e, bound=bound, body=body, ty=body.ty)
        if isinstance(e, Fun):
            env2 = dict(env)
            for n, t in e.params:
                self.check_type(t, tvars, loc)
                env2[n] = t
            body = self.expr(e.body, env2, tvars)
            return replace(e, body=body, ty=FunType(tuple(t for _, t in e.params), body.ty))
        if isinstance(e, App):
            fn = self.expr(e.fn, env, tvars)
            ft = fn.ty
            if not isinstance(ft, FunType):
                raise TypeErr(f"not a function type: {show_type(ft)}", loc)
            if len(ft.params) != len(e.args):
                raise TypeErr(f"function expects {len(ft.params)} argument(s), "
                              f"got {len(e.args)}", loc)
            args = []
            for p, a in zip(ft.params, e.args):
                a2 = self.expr(a, env, tvars)
                self.expect_same(p, a2.ty, a.loc or loc, "argument")
                args.append(a2)
            return replace(e, fn=fn, args=tuple(args), ty=ft.result)
        if isinstance(e, TFun):
            body = self.expr(e.body, env, tvars | {e.tvar})
            return replace(e, body=body, ty=Forall(e.tvar, body.ty))
        if isinstance(e, TApp):
            fn = self.expr(e.fn, env, tvars)
            ft = fn.ty
            if not isinstance(ft, Forall):
                raise TypeErr(f"type application of non-polymorphic value of type "
                              f"{show_type(ft)}", loc)
            self.check_type(e.targ, tvars, loc, allow_forall=False)
            return replace(e, fn=fn, ty=subst_type(ft.body, {ft.var: e.targ}))
        if isinstance(e, Fix):
            self.check_type(e.ftype, tvars, loc)
            if not isinstance(e.ftype, FunType) or not isinstance(e.body, Fun):
                raise TypeErr("fix must bind a function", loc)
            body = self.expr(e.body, {**env, e.name: e.ftype}, tvars)
            self.expect_same(e.ftype, body.ty, loc, f"fix {e.name}")
            return replace(e, body=body, ty=e.ftype)
        if isinstance(e, Constr):
            return self.constr(e, env, tvars)
        if isinstance(e, Match):
            if e.scrut not in env:
                raise TypeErr(f"unbound identifier {e.scrut}", loc)
            st = env[e.scrut]
            if not isinstance(st, ADTType):
                raise TypeErr(f"cannot match on value of type {show_type(st)}", loc)
            if not e.arms:
                raise TypeErr("match with no arms", loc)
            arms, rt = [], None
            for p, body in e.arms:
                p2, binds = self.pattern(p, st, loc)
                b2 = self.expr(body, {**env, **binds}, tvars)
                if rt is None:
                    rt = b2.ty
                else:
                    self.expect_same(rt, b2.ty, body.loc or loc, "match arm")
                arms.append((p2, b2))
            self.exhaustive([p for p, _ in arms], st, loc)
            return replace(e, arms=tuple(arms), ty=rt)
        if isinstance(e, Builtin):
            return self.builtin(e, env, tvars)
        if isinstance(e, Msg):
            fields, seen = [], set()
            for n, a in e.fields:
                if n in seen:
                    raise TypeErr(f"duplicate message field {n}", loc)
                seen.add(n)
                a2 = self.expr(a, env, tvars)
                if _contains_function(a2.ty):
                    raise TypeErr(f"message field {n} has non-serializable type "
                                  f"{show_type(a2.ty)}", loc)
                if n.startswith("_") and not isinstance(a2.ty, StringType):
                    raise TypeErr(f"reserved message field {n} must be a String", loc)
                fields.append((n, a2))
            return replace(e, fields=tuple(fields), ty=MESSAGE)
        if isinstance(e, TFunTable):
            entries = tuple((t, self.expr(b, env, tvars)) for t, b in e.entries)
            return replace(e, entries=entries, ty=TableType())
        raise TypeErr(f"unexpected expression {type(e).__name__}", loc)

    def constr(self, e, env, tvars):
        loc = e.loc
        info = self.adts.constructors.get(e.name)
        if info is None:
            raise TypeErr(f"unknown constructor {e.name}", loc)
        decl, _, fields = info
        if len(e.targs) != len(decl.tparams):
            raise TypeErr(f"constructor {e.name} expects {len(decl.tparams)} type "
                          f"argument(s), got {len(e.targs)}", loc)
        for t in e.targs:
            self.check_type(t, tvars, loc, allow_forall=False)
        if len(e.args) != len(fields):
            raise TypeErr(f"constructor {e.name} expects {len(fields)} argument(s), "
                          f"got {len(e.args)}", loc)
        adt = ADTType(decl.name, tuple(e.targs))
        ftys = self.adts.field_types(e.name, adt)
        args = []
        for ft, a in zip(ftys, e.args):
            a2 = self.expr(a, env, tvars)
            self.expect_same(ft, a2.ty, a.loc or loc, f"argument of {e.name}")
            args.append(a2)
        return replace(e, args=tuple(args), ty=adt)

    def builtin(self, e, env, tvars):
        loc = e.loc
        op = e.op
        if op == "emp":
            k, v = e.targs
            mt = MapType(k, v)
            self.check_type(mt, tvars, loc)
            return replace(e, ty=mt)
        args = tuple(self.expr(a, env, tvars) for a in e.args)
        ts = [a.ty for a in args]

        def arity(n):
            if len(ts) != n:
                raise TypeErr(f"builtin {op} expects {n} argument(s), got {len(ts)}", loc)

        if op in ARITH_OPS or op == "lt":
            arity(2)
            if not isinstance(ts[0], IntType):
                raise TypeErr(f"builtin {op} needs integer arguments, got {show_type(ts[0])}", loc)
            self.expect_same(ts[0], ts[1], loc, f"builtin {op}")
            return replace(e, args=args, targs=(ts[0],), ty=BOOL if op == "lt" else ts[0])
        if op == "eq":
            arity(2)
            if not is_primitive(ts[0]):
                raise TypeErr(f"builtin eq needs primitive arguments, got {show_type(ts[0])}", loc)
            self.expect_same(ts[0], ts[1], loc, "builtin eq")
            return replace(e, args=args, targs=(ts[0],), ty=BOOL)
        if op == "concat":
            arity(2)
            if not isinstance(ts[0], (StringType, ByStrType)):
                raise TypeErr(f"builtin concat needs String or ByStr, got {show_type(ts[0])}", loc)
            self.expect_same(ts[0], ts[1], loc, "builtin concat")
            return replace(e, args=args, targs=(ts[0],), ty=ts[0])
        if op == "strlen":
            arity(1)
            self.expect_same(STRING, ts[0], loc, "builtin strlen")
            return replace(e, args=args, ty=UINT32)
        if op == "to_string":
            arity(1)
            if not isinstance(ts[0], IntType):
                raise TypeErr("builtin to_string needs an integer", loc)
            return replace(e, args=args, targs=(ts[0],), ty=STRING)
        if op == "to_bystr":
            arity(1)
            if not isinstance(ts[0], ByStrXType):
                raise TypeErr("builtin to_bystr needs a ByStrX value", loc)
            return replace(e, args=args, targs=(ts[0],), ty=ByStrType())
        if op in MAP_OPS:
            n = {"put": 3, "get": 2, "contains": 2, "remove": 2, "size": 1}[op]
            arity(n)
            mt = ts[0]
            if not isinstance(mt, MapType):
                raise TypeErr(f"builtin {op} needs a map, got {show_type(mt)}", loc)
            if n >= 2:
                self.expect_same(mt.key, ts[1], loc, f"key of builtin {op}")
            if op == "put":
                self.expect_same(mt.value, ts[2], loc, "value of builtin put")
            rt = {"put": mt, "get": option_of(mt.value), "contains": BOOL,
                  "remove": mt, "size": UINT32}[op]
            return replace(e, args=args, targs=(mt.key, mt.value), ty=rt)
        raise TypeErr(f"unknown builtin {op}", loc)

    # -- patterns
    def pattern(self, p, t, loc):
        """Returns (annotated pattern, {binder: type})."""
        if isinstance(p, Wildcard):
            return replace(p, ty=t), {}
        if isinstance(p, Binder):
            return replace(p, ty=t), {p.name: t}
        info = self.adts.constructors.get(p.name)
        if info is None:
            raise TypeErr(f"unknown constructor {p.name} in pattern", loc)
        decl = info[0]
        if not isinstance(t, ADTType) or t.name != decl.name:
            raise TypeErr(f"constructor {p.name} does not belong to type {show_type(t)}", loc)
        ftys = self.adts.field_types(p.name, t)
        if len(ftys) != len(p.subs):
            raise TypeErr(f"constructor {p.name} expects {len(ftys)} argument(s) in pattern, "
                          f"got {len(p.subs)}", loc)
        subs, binds = [], {}
        for ft, q in zip(ftys, p.subs):
            q2, b = self.pattern(q, ft, loc)
            for name in b:
                if name in binds:
                    raise TypeErr(f"binder {name} used twice in pattern", loc)
            binds.update(b)
            subs.append(q2)
        return replace(p, subs=tuple(subs), ty=t), binds

    def exhaustive(self, pats, t, loc):
        missing = _missing_case([[p] for p in pats], [t], self.adts)
        if missing is not None:
            raise TypeErr(f"non-exhaustive match; unmatched case: {missing[0]}", loc)

    # -- statements
    def stmts(self, stmts, env, fields):
        out = []
        env = dict(env)
        for s in stmts:
            loc = s.loc
            if isinstance(s, SBind):
                e = self.expr(s.expr, env, frozenset())
                env[s.name] = e.ty
                out.append(replace(s, expr=e))
            elif isinstance(s, SLoad):
                ft = self.field(fields, s.field, loc)
                env[s.name] = ft
                out.append(replace(s, ty=ft))
            elif isinstance(s, SStore):
                ft = self.field(fields, s.field, loc)
                self.expect_same(ft, self.var(env, s.var, loc), loc, f"store to {s.field}")
                out.append(s)
            elif isinstance(s, (SMapGet, SMapExists, SMapPut, SMapDelete)):
                mt = self.field(fields, s.field, loc)
                if not isinstance(mt, MapType):
                    raise TypeErr(f"field {s.field} is not a map", loc)
                self.expect_same(mt.key, self.var(env, s.key, loc), loc, "map key")
                if isinstance(s, SMapGet):
                    env[s.name] = option_of(mt.value)
                    out.append(replace(s, ty=env[s.name]))
                    continue
                if isinstance(s, SMapExists):
                    env[s.name] = BOOL
                elif isinstance(s, SMapPut):
                    self.expect_same(mt.value, self.var(env, s.var, loc), loc, "map value")
                out.append(s)
            elif isinstance(s, SMatch):
                st = self.var(env, s.scrut, loc)
                if not isinstance(st, ADTType):
                    raise TypeErr(f"cannot match on value of type {show_type(st)}", loc)
                arms = []
                for p, body in s.arms:
                    p2, binds = self.pattern(p, st, loc)
                    arms.append((p2, self.stmts(body, {**env, **binds}, fields)))
                if not arms:
                    raise TypeErr("match with no arms", loc)
                self.exhaustive([p for p, _ in arms], st, loc)
                out.append(replace(s, arms=tuple(arms)))
            elif isinstance(s, (SSend, SEvent)):
                self.expect_same(MESSAGE, self.var(env, s.var, loc), loc, "send/event")
                out.append(s)
            else:
                raise TypeErr(f"unexpected statement {type(s).__name__}", loc)
        return tuple(out)

    def field(self, fields, name, loc):
        if name not in fields:
            raise TypeErr(f"unknown field {name}", loc)
        return fields[name]

    def var(self, env, name, loc):
        if name not in env:
            raise TypeErr(f"unbound identifier {name}", loc)
        return env[name]


def _check_literal(value, t, loc):
    if isinstance(t, IntType):
        if not isinstance(value, int) or not (t.min <= value <= t.max):
            raise TypeErr(f"literal {value} out of range for {show_type(t)}", loc)
    elif isinstance(t, StringType):
        if not isinstance(value, str):
            raise TypeErr("bad string literal", loc)
    elif isinstance(t, ByStrXType):
        if not isinstance(value, bytes) or len(value) != t.size:
            raise TypeErr(f"byte string literal does not have {t.size} byte(s)", loc)
    elif isinstance(t, ByStrType):
        if not isinstance(value, bytes):
            raise TypeErr("bad byte string literal", loc)
    else:
        raise TypeErr(f"no literals of type {show_type(t)}", loc)


def _contains_function(t) -> bool:
    if isinstance(t, (FunType, Forall, TableType)):
        return True
    if isinstance(t, ADTType):
        return any(_contains_function(a) for a in t.args)
    if isinstance(t, MapType):
        return _contains_function(t.value)
    return False


# -- exhaustiveness (pattern-matrix usefulness of a wildcard row)

def _missing_case(rows, types, adts):
    """Return a list of example patterns (as strings) not covered by ``rows``,
    or None when the matrix is exhaustive."""
    if not types:
        return None if rows else []
    t = types[0]
    head_ctors = []
    for r in rows:
        p = r[0]
        if isinstance(p, ConstructorPat) and p.name not in head_ctors:
            head_ctors.append(p.name)
    all_ctors = []
    if isinstance(t, ADTType) and t.name in adts.decls:
        all_ctors = [c for c, _ in adts.decls[t.name].constructors]
    complete = bool(all_ctors) and all(c in head_ctors for c in all_ctors)
    if complete:
        for c in all_ctors:
            ftys = adts.field_types(c, t)
            k = len(ftys)
            spec = []
            for r in rows:
                p = r[0]
                if isinstance(p, ConstructorPat):
                    if p.name == c:
                        spec.append(list(p.subs) + r[1:])
                else:
                    spec.append([Wildcard()] * k + r[1:])
            m = _missing_case(spec, list(ftys) + types[1:], adts)
            if m is not None:
                args = m[:k]
                head = c if not args else f"({c} {' '.join(args)})"
                return [head] + m[k:]
        return None
    default = [r[1:] for r in rows if not isinstance(r[0], ConstructorPat)]
    m = _missing_case(default, types[1:], adts)
    if m is None:
        return None
    missing = [c for c in all_ctors if c not in head_ctors]
    if missing:
        c = missing[0]
        k = len(adts.field_types(c, t))
        head = c if k == 0 else f"({c}{' _' * k})"
    else:
        head = "_"
    return [head] + m


# -- entry points

def typecheck(p: Program) -> Program:
    """Annotate a parsed program; raises CompileError with diagnostics."""
    ck = Checker(p.adts)
    try:
        _check_decls(ck, p)
        env = {}
        lib = []
        for d in p.lib:
            e = ck.expr(d.expr, env, frozenset())
            t = e.ty
            if d.decl is not None:
                ck.check_type(d.decl, frozenset(), d.loc)
                ck.expect_same(d.decl, t, d.loc, f"definition of {d.name}")
                t = d.decl
            env[d.name] = t
            lib.append(replace(d, expr=e))
        main = contract = None
        if p.main is not None:
            main = ck.expr(p.main, env, frozenset())
        if p.contract is not None:
            contract = _check_contract(ck, p.contract, env)
    except TypeErr as err:
        raise CompileError([Diagnostic("error", str(err), err.loc or Loc(1, 1))]) from None
    return replace(p, lib=tuple(lib), main=main, contract=contract)


def _check_decls(ck, p):
    seen_types = set(BUILTIN_ADT_NAMES)
    seen_ctors = {c for d in ck.adts.decls.values() if d.name in BUILTIN_ADT_NAMES
                  for c, _ in d.constructors}
    for d in p.adts:
        if d.name in seen_types:
            raise TypeErr(f"type {d.name} already defined", d.loc)
        seen_types.add(d.name)
        if len(d.constructors) > 255:
            raise TypeErr(f"type {d.name} has more than 255 constructors", d.loc)
        for c, fields in d.constructors:
            if c in seen_ctors:
                raise TypeErr(f"constructor {c} already defined", d.loc)
            seen_ctors.add(c)
            for f in fields:
                ck.check_type(f, frozenset(d.tparams), d.loc, allow_forall=False)


def _check_contract(ck, c: Contract, env):
    fields = {}
    new_fields = []
    for f in c.fields:
        ck.check_type(f.type, frozenset(), f.loc, allow_forall=False)
        if _contains_function(f.type):
            raise TypeErr(f"field {f.name} has non-serializable type", f.loc)
        if f.name in fields:
            raise TypeErr(f"duplicate field {f.name}", f.loc)
        init = ck.expr(f.init, env, frozenset())
        ck.expect_same(f.type, init.ty, f.loc, f"initializer of {f.name}")
        fields[f.name] = f.type
        new_fields.append(replace(f, init=init))
    transitions, names = [], set()
    for t in c.transitions:
        if t.name in names:
            raise TypeErr(f"duplicate transition {t.name}", t.loc)
        names.add(t.name)
        tenv = dict(env)
        for n, ty in t.params:
            ck.check_type(ty, frozenset(), t.loc, allow_forall=False)
            if _contains_function(ty):
                raise TypeErr(f"parameter {n} has non-serializable type", t.loc)
            tenv[n] = ty
        transitions.append(replace(t, body=ck.stmts(t.body, tenv, fields)))
    return replace(c, fields=tuple(new_fields), transitions=tuple(transitions))


def check_source(text: str) -> Program:
    from minivella.frontend.parser import parse
    return typecheck(parse(text))
