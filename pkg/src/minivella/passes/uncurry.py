"""Uncurrying.

Every binder is first renamed apart (so a name identifies one binding
site), then each ``let``/library definition bound to a chain of unary
functions is turned into a single n-ary function when all its uses are
saturated calls of at least n arguments. Uses that let the function
escape (passed as a value, partially applied, stored in a constructor)
keep the curried form. A recursive function's ``fix`` name belongs to the
same group as its ``let`` name.
"""

from __future__ import annotations

from dataclasses import replace

from minivella.core import (
    App, Binder, ConstructorPat, Fix, Forall, Fun, FunType, Let, Match, Program, SBind,
    SLoad, SMapExists, SMapGet, SMatch, TApp, TFun, TypeVar, Var, Wildcard, children,
    fresh_name, map_children, program_exprs, subst_type, walk,
)
from minivella.frontend.typecheck import typecheck


# --------------------------------------------------------------------------
# Renaming apart

class _Renamer:
    def __init__(self, used, tused):
        self.used = set(used)
        self.tused = set(tused)

    def fresh(self, name):
        n = fresh_name(name, self.used)
        self.used.add(n)
        return n

    def fresh_t(self, name):
        n = fresh_name(name, self.tused)
        self.tused.add(n)
        return n

    def ty(self, t, tenv):
        return subst_type(t, tenv) if tenv and t is not None else t

    def pat(self, p, env):
        if isinstance(p, Binder):
            n = self.fresh(p.name)
            env[p.name] = n
            return Binder(n)
        if isinstance(p, ConstructorPat):
            return ConstructorPat(p.name, tuple(self.pat(q, env) for q in p.subs))
        return Wildcard()

    def expr(self, e, env, tenv):
        if isinstance(e, Var):
            return Var(env.get(e.name, e.name), loc=e.loc)
        if isinstance(e, Let):
            bound = self.expr(e.bound, env, tenv)
            n = self.fresh(e.name)
            return Let(n, self.ty(e.decl, tenv), bound,
                       self.expr(e.body, {**env, e.name: n}, tenv), loc=e.loc)
        if isinstance(e, Fun):
            env2 = dict(env)
            params = []
            for p, t in e.params:
                n = self.fresh(p)
                env2[p] = n
                params.append((n, self.ty(t, tenv)))
            return Fun(tuple(params), self.expr(e.body, env2, tenv), loc=e.loc)
        if isinstance(e, Fix):
            n = self.fresh(e.name)
            return Fix(n, self.ty(e.ftype, tenv), self.expr(e.body, {**env, e.name: n}, tenv),
                       loc=e.loc)
        if isinstance(e, TFun):
            tv = self.fresh_t(e.tvar)
            return TFun(tv, self.expr(e.body, env, {**tenv, e.tvar: TypeVar(tv)}), loc=e.loc)
        if isinstance(e, TApp):
            return TApp(self.expr(e.fn, env, tenv), self.ty(e.targ, tenv), loc=e.loc)
        if isinstance(e, Match):
            arms = []
            for p, body in e.arms:
                env2 = dict(env)
                p2 = self.pat(p, env2)
                arms.append((p2, self.expr(body, env2, tenv)))
            return Match(env.get(e.scrut, e.scrut), tuple(arms), loc=e.loc)
        e = map_children(e, lambda c: self.expr(c, env, tenv))
        if hasattr(e, "targs") and e.targs:
            e = replace(e, targs=tuple(self.ty(t, tenv) for t in e.targs))
        return replace(e, ty=None)

    def stmts(self, stmts, env):
        out = []
        env = dict(env)
        for s in stmts:
            for attr in ("var", "key"):
                if hasattr(s, attr):
                    s = replace(s, **{attr: env.get(getattr(s, attr), getattr(s, attr))})
            if isinstance(s, SBind):
                e = self.expr(s.expr, env, {})
                n = self.fresh(s.name)
                env[s.name] = n
                s = replace(s, name=n, expr=e)
            elif isinstance(s, (SLoad, SMapGet, SMapExists)):
                n = self.fresh(s.name)
                env[s.name] = n
                s = replace(s, name=n)
            elif isinstance(s, SMatch):
                arms = []
                for p, body in s.arms:
                    env2 = dict(env)
                    p2 = self.pat(p, env2)
                    arms.append((p2, self.stmts(body, env2)))
                s = replace(s, scrut=env.get(s.scrut, s.scrut), arms=tuple(arms))
            out.append(s)
        return tuple(out)


def uniquify(p: Program) -> Program:
    """Rename every local binder (and type variable) apart. Transition
    parameters keep their names: they are part of the message interface."""
    seed = set()
    if p.contract is not None:
        for t in p.contract.transitions:
            seed.update(n for n, _ in t.params)
    rn = _Renamer(seed, set())
    env = {}
    lib = []
    for d in p.lib:
        e = rn.expr(d.expr, env, {})
        n = rn.fresh(d.name)
        env[d.name] = n
        lib.append(replace(d, name=n, expr=e))
    main = rn.expr(p.main, env, {}) if p.main is not None else None
    contract = p.contract
    if contract is not None:
        fields = tuple(replace(f, init=rn.expr(f.init, env, {})) for f in contract.fields)
        trans = []
        for t in contract.transitions:
            tenv = dict(env)
            for n, _ in t.params:
                tenv[n] = n
            trans.append(replace(t, body=rn.stmts(t.body, tenv)))
        contract = replace(contract, fields=fields, transitions=tuple(trans))
    return replace(p, lib=tuple(lib), main=main, contract=contract)


# --------------------------------------------------------------------------
# Arity analysis

def _chain(e):
    """Split ``tfun* (fix)? fun^k`` into (tfuns, fix-or-None, funs)."""
    tfuns = []
    while isinstance(e, TFun):
        tfuns.append(e)
        e = e.body
    fix = None
    if isinstance(e, Fix):
        fix = e
        e = e.body
    funs = []
    while isinstance(e, Fun) and len(e.params) == 1:
        funs.append(e)
        e = e.body
    return tfuns, fix, funs


def _spine(e):
    args = []
    while isinstance(e, App):
        args = list(e.args) + args
        e = e.fn
    head = e
    m = 0
    while isinstance(e, TApp):
        m += 1
        e = e.fn
    return head, m, e, args


class _Group:
    def __init__(self, k):
        self.k = k
        self.calls = []
        self.escapes = False

    @property
    def arity(self):
        if self.escapes:
            return 1
        return min([self.k] + self.calls)


class _Analysis:
    def __init__(self):
        self.members = {}   # name -> (group, number of type applications expected)

    def bind(self, name, e):
        tfuns, fix, funs = _chain(e)
        if not funs:
            return
        g = _Group(len(funs))
        self.members[name] = (g, len(tfuns))
        if fix is not None:
            self.members[fix.name] = (g, 0)

    def collect(self, e):
        for n in walk(e):
            if isinstance(n, Let):
                self.bind(n.name, n.bound)

    def scan(self, e):
        if isinstance(e, (App, TApp, Var)):
            head, m, base, args = _spine(e)
            if isinstance(base, Var) and base.name in self.members:
                g, want = self.members[base.name]
                if m == want and args:
                    g.calls.append(len(args))
                else:
                    g.escapes = True
            elif not isinstance(base, Var):
                self.scan(base)
            for a in args:
                self.scan(a)
            return
        for c in children(e):
            self.scan(c)


def _stmt_exprs(stmts):
    for s in stmts:
        if isinstance(s, SBind):
            yield s.expr
        elif isinstance(s, SMatch):
            for _, b in s.arms:
                yield from _stmt_exprs(b)


def _stmt_names(stmts):
    for s in stmts:
        for attr in ("var", "key", "scrut"):
            v = getattr(s, attr, None)
            if isinstance(v, str):
                yield v
        if isinstance(s, SMatch):
            for _, b in s.arms:
                yield from _stmt_names(b)


# --------------------------------------------------------------------------
# Rewriting

def _merge_type(t, m, n):
    if m:
        return Forall(t.var, _merge_type(t.body, m - 1, n))
    params = []
    for _ in range(n):
        params.extend(t.params)
        t = t.result
    return FunType(tuple(params), t)


def _merge_chain(e, n, rw):
    """Rebuild ``tfun* (fix)? fun^k`` with the first n functions merged."""
    if isinstance(e, TFun):
        return replace(e, body=_merge_chain(e.body, n, rw), ty=None)
    if isinstance(e, Fix):
        return replace(e, ftype=_merge_type(e.ftype, 0, n), body=_merge_chain(e.body, n, rw),
                       ty=None)
    params = []
    f = e
    for _ in range(n):
        params.extend(f.params)
        f = f.body
    return Fun(tuple(params), rw(f), loc=e.loc)


class _Rewriter:
    def __init__(self, members):
        self.arity = {name: (g.arity, m) for name, (g, m) in members.items()}

    def binding(self, name, e):
        a = self.arity.get(name)
        if a is None or a[0] <= 1:
            return self.expr(e), None
        return _merge_chain(e, a[0], self.expr), a

    def expr(self, e):
        if isinstance(e, App):
            head, m, base, args = _spine(e)
            args = [self.expr(a) for a in args]
            n = 1
            if isinstance(base, Var) and base.name in self.arity:
                n = self.arity[base.name][0]
            head = self.expr(head) if not isinstance(base, Var) else head
            out = App(head, tuple(args[:n]), loc=e.loc)
            for a in args[n:]:
                out = App(out, (a,), loc=e.loc)
            return out
        if isinstance(e, Let):
            bound, a = self.binding(e.name, e.bound)
            decl = e.decl
            if a is not None and decl is not None:
                decl = _merge_type(decl, a[1], a[0])
            return Let(e.name, decl, bound, self.expr(e.body), loc=e.loc)
        return replace(map_children(e, self.expr), ty=None)

    def stmts(self, stmts):
        out = []
        for s in stmts:
            if isinstance(s, SBind):
                s = replace(s, expr=self.expr(s.expr))
            elif isinstance(s, SMatch):
                s = replace(s, arms=tuple((p, self.stmts(b)) for p, b in s.arms))
            out.append(s)
        return tuple(out)


def uncurry(p: Program) -> Program:
    p = uniquify(p)
    an = _Analysis()
    for d in p.lib:
        an.bind(d.name, d.expr)
    exprs = [d.expr for d in p.lib]
    if p.main is not None:
        exprs.append(p.main)
    if p.contract is not None:
        exprs.extend(f.init for f in p.contract.fields)
        for t in p.contract.transitions:
            exprs.extend(_stmt_exprs(t.body))
            for n in _stmt_names(t.body):
                if n in an.members:
                    an.members[n][0].escapes = True
    for e in exprs:
        an.collect(e)
    for e in exprs:
        an.scan(e)

    rw = _Rewriter(an.members)
    lib = []
    for d in p.lib:
        e, a = rw.binding(d.name, d.expr)
        decl = d.decl
        if a is not None and decl is not None:
            decl = _merge_type(decl, a[1], a[0])
        lib.append(replace(d, decl=decl, expr=e))
    main = rw.expr(p.main) if p.main is not None else None
    contract = p.contract
    if contract is not None:
        contract = replace(
            contract,
            fields=tuple(replace(f, init=rw.expr(f.init)) for f in contract.fields),
            transitions=tuple(replace(t, body=rw.stmts(t.body)) for t in contract.transitions))
    return typecheck(replace(p, lib=tuple(lib), main=main, contract=contract))


def arity_mismatches(p: Program) -> list:
    """Calls whose argument count differs from the callee's arity
    (expected after uncurrying: none)."""
    return [e for e in program_exprs(p) if isinstance(e, App)
            and not (isinstance(e.fn.ty, FunType) and len(e.fn.ty.params) == len(e.args))]
