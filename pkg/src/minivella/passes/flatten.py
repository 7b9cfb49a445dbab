"""Pattern-match flattening.

Matches with nested constructor patterns are compiled, column by column,
into nested matches whose patterns are all flat (a constructor applied to
binders/wildcards). Rows are grouped by the constructor in the tested
column; rows with a wildcard there are copied into every group, so arm
bodies may be duplicated. Fresh column binders are named ``$m<k>``.
"""

from __future__ import annotations

from dataclasses import replace

from minivella.core import (
    ADTEnv, Binder, ConstructorPat, Let, Match, Program, SBind, SMatch, Var, Wildcard,
    all_names, free_vars, is_flat, map_children, map_program, program_exprs, stmts_free_vars,
)
from minivella.frontend.typecheck import typecheck


class _Row:
    __slots__ = ("pats", "body", "binds")

    def __init__(self, pats, body, binds):
        self.pats = pats
        self.body = body
        self.binds = binds      # pending (binder name, column variable)


class _ExprKind:
    @staticmethod
    def match(var, arms):
        return Match(var, tuple(arms))

    @staticmethod
    def let(name, src, body):
        return Let(name, None, Var(src), body)

    @staticmethod
    def free(body):
        return free_vars(body)


class _StmtKind:
    @staticmethod
    def match(var, arms):
        return (SMatch(var, tuple(arms)),)

    @staticmethod
    def let(name, src, body):
        return (SBind(name, Var(src)),) + tuple(body)

    @staticmethod
    def free(body):
        return stmts_free_vars(body)


class Flattener:
    def __init__(self, adts: ADTEnv, used: set):
        self.adts = adts
        self.used = used
        self.counter = 0

    def fresh(self) -> str:
        while True:
            name = f"$m{self.counter}"
            self.counter += 1
            if name not in self.used:
                self.used.add(name)
                return name

    # -- traversal (outer matches first, so numbering follows source order)
    def expr(self, e):
        if isinstance(e, Match):
            if all(is_flat(p) for p, _ in e.arms):
                return replace(e, arms=tuple((p, self.expr(b)) for p, b in e.arms))
            return self.expr(self.compile_match(e.scrut, e.arms, _ExprKind))
        return map_children(e, self.expr)

    def stmts(self, stmts):
        out = []
        for s in stmts:
            if isinstance(s, SBind):
                out.append(replace(s, expr=self.expr(s.expr)))
            elif isinstance(s, SMatch):
                if all(is_flat(p) for p, _ in s.arms):
                    out.append(replace(s, arms=tuple((p, self.stmts(b)) for p, b in s.arms)))
                else:
                    out.extend(self.stmts(self.compile_match(s.scrut, s.arms, _StmtKind)))
            else:
                out.append(s)
        return tuple(out)

    # -- pattern-matrix compilation
    def compile_match(self, scrut, arms, kind):
        t = arms[0][0].ty
        rows = [_Row([p], body, []) for p, body in arms]
        return self.compile([(scrut, t)], rows, kind)

    def compile(self, cols, rows, kind):
        first = rows[0]
        if all(not isinstance(p, ConstructorPat) for p in first.pats):
            binds = list(first.binds)
            for (var, _), p in zip(cols, first.pats):
                if isinstance(p, Binder):
                    binds.append((p.name, var))
            body = first.body
            for name, src in reversed(binds):
                if name != src and name in kind.free(body):
                    body = kind.let(name, src, body)
            return body
        j = next(i for i, p in enumerate(first.pats) if isinstance(p, ConstructorPat))
        var, t = cols[j]
        decl = self.adts.decls[t.name]
        order = []
        for r in rows:
            p = r.pats[j]
            if isinstance(p, ConstructorPat) and p.name not in order:
                order.append(p.name)
        order += [c for c, _ in decl.constructors if c not in order]

        arms = []
        for c in order:
            ftys = self.adts.field_types(c, t)
            k = len(ftys)
            spec = []
            for r in rows:
                p = r.pats[j]
                rest_l, rest_r = r.pats[:j], r.pats[j + 1:]
                if isinstance(p, ConstructorPat):
                    if p.name == c:
                        spec.append((True, _Row(rest_l + list(p.subs) + rest_r, r.body, r.binds)))
                    continue
                binds = r.binds + [(p.name, var)] if isinstance(p, Binder) else r.binds
                spec.append((False, _Row(rest_l + [Wildcard()] * k + rest_r, r.body, binds)))
            if not spec:
                raise AssertionError(f"non-exhaustive match reached flattening ({c})")
            names = self._sub_names(j, k, spec, cols, kind)
            sub_pats = []
            for i, name in enumerate(names):
                if name is None:
                    sub_pats.append(Wildcard())
                else:
                    sub_pats.append(Binder(name))
                    for _, r in spec:
                        q = r.pats[j + i]
                        if isinstance(q, Binder) and q.name == name:
                            r.pats[j + i] = Wildcard()
            new_cols = cols[:j] + [(n, ft) for n, ft in zip(names, ftys)] + cols[j + 1:]
            body = self.compile(new_cols, [r for _, r in spec], kind)
            arms.append((ConstructorPat(c, tuple(sub_pats)), body))
        return kind.match(var, arms)

    def _sub_names(self, j, k, spec, cols, kind):
        names = []
        taken = {n for n, _ in cols if n is not None}
        for _, r in spec:
            for name, src in r.binds:
                taken.update((name, src))
        for i in range(k):
            subs = [(own, r.pats[j + i], r) for own, r in spec]
            ctor_subs = [q for own, q, _ in subs if own]
            if all(isinstance(q, Wildcard) for _, q, _ in subs):
                names.append(None)
                continue
            cand = None
            if ctor_subs and all(isinstance(q, Binder) for q in ctor_subs):
                n0 = ctor_subs[0].name
                if all(q.name == n0 for q in ctor_subs) and n0 not in taken:
                    # reuse the user's name unless it would capture a free
                    # occurrence in a row that does not bind it here
                    ok = all(not (isinstance(q, Wildcard) and n0 in kind.free(r.body))
                             for _, q, r in subs)
                    if ok:
                        cand = n0
            if cand is None:
                cand = self.fresh()
            taken.add(cand)
            names.append(cand)
        return names


def flatten_matches(p: Program) -> Program:
    """Every pattern in the result is flat; the result is re-typechecked."""
    fl = Flattener(ADTEnv(p.adts), all_names(p))
    out = map_program(p, fl.expr, fl.stmts)
    return typecheck(out)


def _stmt_patterns(stmts):
    for s in stmts:
        if isinstance(s, SMatch):
            for q, body in s.arms:
                yield q
                yield from _stmt_patterns(body)


def non_flat_patterns(p: Program) -> list:
    """Patterns anywhere in ``p`` that are not flat (expected after
    flattening: none)."""
    pats = [q for e in program_exprs(p) if isinstance(e, Match) for q, _ in e.arms]
    if p.contract is not None:
        for t in p.contract.transitions:
            pats.extend(_stmt_patterns(t.body))
    return [q for q in pats if not is_flat(q)]
