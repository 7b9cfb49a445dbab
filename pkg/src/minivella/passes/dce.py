"""Dead code elimination.

Removes library definitions not transitively reachable from the main
expression, field initializers or transitions, and ``let`` bindings that
are never used and whose bound expression cannot fail. Checked arithmetic
(overflow, division by zero) and any call counts as possibly failing.
"""

from __future__ import annotations

from dataclasses import replace

from minivella.core import (
    Builtin, Constr, Fix, Fun, Let, Lit, Match, Msg, Program, SBind, SMatch, TFun,
    TFunTable, Var, free_vars, lib_closure, map_expr, stmts_free_vars,
)
from minivella.frontend.typecheck import ARITH_OPS


def is_pure(e) -> bool:
    """True when evaluating ``e`` can neither fail nor diverge."""
    if isinstance(e, (Lit, Var, Fun, TFun, Fix, TFunTable)):
        return True
    if isinstance(e, Builtin):
        return e.op not in ARITH_OPS and all(is_pure(a) for a in e.args)
    if isinstance(e, Constr):
        return all(is_pure(a) for a in e.args)
    if isinstance(e, Msg):
        return all(is_pure(a) for _, a in e.fields)
    if isinstance(e, Let):
        return is_pure(e.bound) and is_pure(e.body)
    if isinstance(e, Match):
        return all(is_pure(b) for _, b in e.arms)
    return False  # App, TApp


def _drop_lets(e):
    def f(n):
        if isinstance(n, Let) and n.name not in free_vars(n.body) and is_pure(n.bound):
            return n.body
        return n
    return map_expr(e, f)


def _drop_stmt_lets(stmts):
    out = []
    for s in stmts:
        if isinstance(s, SBind):
            s = replace(s, expr=_drop_lets(s.expr))
        elif isinstance(s, SMatch):
            s = replace(s, arms=tuple((p, _drop_stmt_lets(b)) for p, b in s.arms))
        out.append(s)
    return tuple(out)


def entry_roots(p: Program) -> set:
    roots = set()
    if p.main is not None:
        roots |= free_vars(p.main)
    if p.contract is not None:
        for f in p.contract.fields:
            roots |= free_vars(f.init)
        for t in p.contract.transitions:
            roots |= stmts_free_vars(t.body, frozenset(n for n, _ in t.params))
    return roots


def reachable_lib(p: Program) -> list:
    return lib_closure(p.lib, entry_roots(p))


def eliminate_dead_code(p: Program) -> Program:
    main = _drop_lets(p.main) if p.main is not None else None
    contract = p.contract
    if contract is not None:
        contract = replace(
            contract,
            fields=tuple(replace(f, init=_drop_lets(f.init)) for f in contract.fields),
            transitions=tuple(replace(t, body=_drop_stmt_lets(t.body))
                              for t in contract.transitions))
    p = replace(p, main=main, contract=contract)
    keep = reachable_lib(p)
    lib = tuple(replace(p.lib[i], expr=_drop_lets(p.lib[i].expr)) for i in keep)
    p = replace(p, lib=lib)
    # dropping lets can make more library code unreachable
    keep = reachable_lib(p)
    return replace(p, lib=tuple(p.lib[i] for i in keep))
