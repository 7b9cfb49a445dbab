"""Monomorphization through type-flow analysis.

A monovariant (0-CFA) flow analysis tracks which function and type
abstraction labels reach each variable, function result, constructor
field and map value. At every type application site the (ground) type
argument, under each instantiation of the enclosing type abstractions, is
recorded against every type abstraction that may flow into the applied
expression. Each ``tfun`` is then replaced by a ``TFunTable`` holding one
specialized copy of its body per recorded type; type applications become
table lookups. Type abstractions nested in a specialized body yield
nested tables.
"""

from __future__ import annotations

import itertools
from dataclasses import replace

from minivella.core import (
    ADTType, App, Binder, Builtin, Constr, ConstructorPat, Fix, Forall, Fun, FunType, Let, Lit,
    Loc, MapType, Match, Msg, Program, SBind, SMatch, TableType, TApp, TFun, TFunTable, Var,
    Wildcard, children, map_children, pattern_binders, program_exprs, show_type, subst_type,
    type_depth, type_free_vars,
)
from minivella.frontend.parser import CompileError, Diagnostic

MAX_TYPE_DEPTH = 16


def erase_type(t):
    """Polymorphic values are dispatch tables at run time."""
    if isinstance(t, Forall):
        return TableType()
    if isinstance(t, ADTType) and t.args:
        return ADTType(t.name, tuple(erase_type(a) for a in t.args))
    if isinstance(t, MapType):
        return MapType(erase_type(t.key), erase_type(t.value))
    if isinstance(t, FunType):
        return FunType(tuple(erase_type(a) for a in t.params), erase_type(t.result))
    return t


class FlowAnalysis:
    """Abstract values are sets of labels (ids of Fun/TFun nodes)."""

    def __init__(self, p: Program):
        self.p = p
        self.nodes = {}          # label -> Fun/TFun node
        self.V = {}              # variable -> labels
        self.RET = {}            # label -> labels of its result
        self.C = {}              # (constructor, field index) -> labels
        self.MAPV = set()        # labels stored in any map
        self.G = {}              # TFun label -> set of ground types
        self.sites = []          # (TApp node, enclosing ((tvar, label), ...))
        self.site_fn = {}        # id(TApp) -> labels of the applied expression
        self.changed = False
        for e, anc in self._roots():
            self._collect(e, anc)

    # -- structure
    def _roots(self):
        p = self.p
        for d in p.lib:
            yield d.expr, ()
        if p.main is not None:
            yield p.main, ()
        if p.contract is not None:
            for f in p.contract.fields:
                yield f.init, ()
            for t in p.contract.transitions:
                for e in _stmt_exprs(t.body):
                    yield e, ()

    def _collect(self, e, anc):
        stack = [(e, anc)]
        while stack:
            n, a = stack.pop()
            if isinstance(n, (Fun, TFun)):
                self.nodes[id(n)] = n
            if isinstance(n, TFun):
                self.G.setdefault(id(n), set())
                a = a + ((n.tvar, id(n)),)
            if isinstance(n, TApp):
                self.sites.append((n, a))
            for c in children(n):
                stack.append((c, a))

    # -- lattice helpers
    def _add(self, table, key, labels):
        if not labels:
            return
        cur = table.get(key)
        if cur is None:
            table[key] = set(labels)
            self.changed = True
        elif not labels <= cur:
            cur |= labels
            self.changed = True

    def _get(self, table, key):
        return table.get(key, set())

    # -- abstract evaluation
    def av(self, e):
        if isinstance(e, Var):
            return self._get(self.V, e.name)
        if isinstance(e, Lit):
            return set()
        if isinstance(e, Let):
            self._add(self.V, e.name, self.av(e.bound))
            return self.av(e.body)
        if isinstance(e, Fun):
            self._add(self.RET, id(e), self.av(e.body))
            return {id(e)}
        if isinstance(e, Fix):
            self._add(self.V, e.name, {id(e.body)})
            return self.av(e.body)
        if isinstance(e, TFun):
            self._add(self.RET, id(e), self.av(e.body))
            return {id(e)}
        if isinstance(e, App):
            fs = self.av(e.fn)
            args = [self.av(a) for a in e.args]
            out = set()
            for lab in fs:
                f = self.nodes.get(lab)
                if isinstance(f, Fun) and len(f.params) == len(args):
                    for (pn, _), a in zip(f.params, args):
                        self._add(self.V, pn, a)
                    out |= self._get(self.RET, lab)
            return out
        if isinstance(e, TApp):
            fs = self.av(e.fn)
            self.site_fn[id(e)] = fs
            out = set()
            for lab in fs:
                if isinstance(self.nodes.get(lab), TFun):
                    out |= self._get(self.RET, lab)
            return out
        if isinstance(e, Constr):
            for i, a in enumerate(e.args):
                self._add(self.C, (e.name, i), self.av(a))
            return set()
        if isinstance(e, Match):
            out = set()
            for p, body in e.arms:
                self._bind_pattern(p)
                out |= self.av(body)
            return out
        if isinstance(e, Builtin):
            args = [self.av(a) for a in e.args]
            if e.op == "put":
                if args[2] and not args[2] <= self.MAPV:
                    self.MAPV |= args[2]
                    self.changed = True
            elif e.op == "get":
                self._add(self.C, ("Some", 0), set(self.MAPV))
            return set()
        if isinstance(e, Msg):
            for _, a in e.fields:
                self.av(a)
            return set()
        raise TypeError(f"flow analysis: unexpected {type(e).__name__}")

    def _bind_pattern(self, p):
        if isinstance(p, ConstructorPat):
            for i, q in enumerate(p.subs):
                for b in pattern_binders(q):
                    # nested patterns are flattened before this pass; a
                    # binder directly under a constructor receives the field
                    self._add(self.V, b, self._get(self.C, (p.name, i)))

    def stmts(self, stmts):
        for s in stmts:
            if isinstance(s, SBind):
                self._add(self.V, s.name, self.av(s.expr))
            elif isinstance(s, SMatch):
                for p, body in s.arms:
                    self._bind_pattern(p)
                    self.stmts(body)

    def _sweep(self):
        p = self.p
        for d in p.lib:
            self._add(self.V, d.name, self.av(d.expr))
        if p.main is not None:
            self.av(p.main)
        if p.contract is not None:
            for f in p.contract.fields:
                self.av(f.init)
            for t in p.contract.transitions:
                self.stmts(t.body)

    def _instantiate(self):
        for site, anc in self.sites:
            fs = [lab for lab in self.site_fn.get(id(site), ()) if lab in self.G]
            if not fs:
                continue
            fv = type_free_vars(site.targ)
            rel = [(tv, lab) for tv, lab in anc if tv in fv]
            choices = [sorted(self.G[lab], key=show_type) for _, lab in rel]
            for combo in itertools.product(*choices):
                theta = {tv: t for (tv, _), t in zip(rel, combo)}
                t = subst_type(site.targ, theta)
                if type_free_vars(t):
                    raise _error(f"cannot ground type argument {show_type(t)}", site.loc)
                if type_depth(t) > MAX_TYPE_DEPTH:
                    raise _error(f"type instantiation exceeds depth {MAX_TYPE_DEPTH} "
                                 f"at type application @{show_type(site.targ)}", site.loc)
                for lab in fs:
                    if t not in self.G[lab]:
                        self.G[lab].add(t)
                        self.changed = True

    def run(self):
        while True:
            self.changed = False
            self._sweep()
            self._instantiate()
            if not self.changed:
                return self


def _error(msg, loc):
    return CompileError([Diagnostic("error", msg, loc or Loc(1, 1))])


def _stmt_exprs(stmts):
    for s in stmts:
        if isinstance(s, SBind):
            yield s.expr
        elif isinstance(s, SMatch):
            for _, b in s.arms:
                yield from _stmt_exprs(b)


# --------------------------------------------------------------------------
# Specialization

class _Specializer:
    def __init__(self, G):
        self.G = G

    def ty(self, t, theta):
        return erase_type(subst_type(t, theta)) if t is not None else None

    def pat(self, p, theta):
        if isinstance(p, ConstructorPat):
            return ConstructorPat(p.name, tuple(self.pat(q, theta) for q in p.subs),
                                  ty=self.ty(p.ty, theta))
        if isinstance(p, Binder):
            return Binder(p.name, ty=self.ty(p.ty, theta))
        return Wildcard(ty=self.ty(p.ty, theta))

    def expr(self, e, theta):
        if isinstance(e, TFun):
            entries = tuple((t, self.expr(e.body, {**theta, e.tvar: t}))
                            for t in sorted(self.G.get(id(e), ()), key=show_type))
            return TFunTable(e.tvar, entries, ty=TableType(), loc=e.loc)
        e2 = map_children(e, lambda c: self.expr(c, theta))
        kw = {"ty": self.ty(e.ty, theta)}
        if isinstance(e, Let) and e.decl is not None:
            kw["decl"] = self.ty(e.decl, theta)
        elif isinstance(e, Fun):
            kw["params"] = tuple((n, self.ty(t, theta)) for n, t in e.params)
        elif isinstance(e, Fix):
            kw["ftype"] = self.ty(e.ftype, theta)
        elif isinstance(e, TApp):
            kw["targ"] = subst_type(e.targ, theta)
        elif isinstance(e, (Constr, Builtin)) and e.targs:
            kw["targs"] = tuple(self.ty(t, theta) for t in e.targs)
        elif isinstance(e, Match):
            kw["arms"] = tuple((self.pat(p, theta), b) for p, b in e2.arms)
        return replace(e2, **kw)

    def stmts(self, stmts):
        out = []
        for s in stmts:
            if isinstance(s, SBind):
                s = replace(s, expr=self.expr(s.expr, {}))
            elif isinstance(s, SMatch):
                s = replace(s, arms=tuple((p, self.stmts(b)) for p, b in s.arms))
            out.append(s)
        return tuple(out)


def _tvars_unique(p: Program) -> bool:
    seen = set()
    for e in program_exprs(p):
        if isinstance(e, TFun):
            if e.tvar in seen:
                return False
            seen.add(e.tvar)
    return True


def monomorphize(p: Program) -> Program:
    """Replace every type abstraction by a dispatch table of specialized
    copies. The input must be typechecked with flat patterns."""
    if not _tvars_unique(p):
        from minivella.frontend.typecheck import typecheck
        from minivella.passes.uncurry import uniquify
        p = typecheck(uniquify(p))
    fa = FlowAnalysis(p).run()
    sp = _Specializer(fa.G)
    lib = tuple(replace(d, expr=sp.expr(d.expr, {}),
                        decl=sp.ty(d.decl, {}) if d.decl is not None else None)
                for d in p.lib)
    main = sp.expr(p.main, {}) if p.main is not None else None
    contract = p.contract
    if contract is not None:
        contract = replace(
            contract,
            fields=tuple(replace(f, init=sp.expr(f.init, {})) for f in contract.fields),
            transitions=tuple(replace(t, body=sp.stmts(t.body)) for t in contract.transitions))
    return replace(p, lib=lib, main=main, contract=contract)


def residual_type_variables(p: Program) -> list:
    """Nodes of a monomorphized program whose annotations still mention a
    type variable or quantifier (expected: none)."""
    bad = []
    for e in program_exprs(p):
        ts = [e.ty]
        if isinstance(e, Fun):
            ts += [t for _, t in e.params]
        elif isinstance(e, Let):
            ts.append(e.decl)
        elif isinstance(e, Fix):
            ts.append(e.ftype)
        elif isinstance(e, TApp):
            ts.append(e.targ)
        elif isinstance(e, (Constr, Builtin)):
            ts += list(e.targs)
        elif isinstance(e, Match):
            for q, _ in e.arms:
                stack = [q]
                while stack:
                    x = stack.pop()
                    ts.append(x.ty)
                    if isinstance(x, ConstructorPat):
                        stack.extend(x.subs)
        if isinstance(e, TFun) or any(t is not None and _has_var(t) for t in ts):
            bad.append(e)
    return bad


def _has_var(t):
    if isinstance(t, (Forall,)):
        return True
    return bool(type_free_vars(t))
