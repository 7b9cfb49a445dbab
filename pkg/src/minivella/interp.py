"""Reference tree-walking interpreter.

Environment-based call-by-value evaluation over every pipeline stage: the
typed source program, the curried and uncurried forms, the monomorphized
form (type-function tables) and the closure-converted statement form. All
builtins delegate to the runtime package, so arithmetic, maps and
serialization are shared with the VM. Deliberately unoptimized: it is the
semantic oracle and the timing baseline.
"""

from __future__ import annotations

import sys
import threading

from minivella.core import (
    ADTType, App, Binder, Builtin, Constr, ConstructorPat, Fix, Fun, Let, Lit, Match, Msg,
    Program, SBind, SEvent, SLoad, SMapDelete, SMapExists, SMapGet, SMapPut, SMatch, SSend,
    SStore, TApp, TFun, TFunTable, Var, Wildcard, lib_closure, free_vars, stmts_free_vars,
    subst_type,
)
from minivella.runtime.errors import (
    InternalError, MVRuntimeError, StackOverflow, StepLimitExceeded,
)
from minivella.runtime.state import ExecResult, Outputs
from minivella.runtime.values import ADTValue, MapValue, MsgValue
from minivella.runtime.wideint import arith

DEFAULT_STACK_LIMIT = 100_000
DEFAULT_STEP_LIMIT = 10 ** 9

TRUE = ADTValue("True")
FALSE = ADTValue("False")
NONE = ADTValue("None")


class Closure:
    __slots__ = ("params", "body", "env", "tenv")

    def __init__(self, params, body, env, tenv):
        self.params = params
        self.body = body
        self.env = env
        self.tenv = tenv


class TypeClosure:
    __slots__ = ("tvar", "body", "env", "tenv")

    def __init__(self, tvar, body, env, tenv):
        self.tvar = tvar
        self.body = body
        self.env = env
        self.tenv = tenv


class TableValue:
    """Value of a monomorphized type abstraction."""
    __slots__ = ("entries", "env")

    def __init__(self, entries, env):
        self.entries = entries
        self.env = env


def stack_overflow(limit):
    return StackOverflow(f"call stack depth limit ({limit}) exceeded")


def step_limit_error(limit):
    return StepLimitExceeded(f"step limit ({limit}) exceeded")


def call_deep(fn, *args):
    """Run ``fn`` on a thread with a large stack and recursion limit; the
    evaluator recurses once per nested call of the interpreted program."""
    box = {}

    def target():
        try:
            box["value"] = fn(*args)
        except BaseException as exc:  # re-raised on the calling thread
            box["error"] = exc

    old_limit = sys.getrecursionlimit()
    old_size = threading.stack_size()
    sys.setrecursionlimit(max(old_limit, 2_000_000))
    threading.stack_size(1 << 30)
    try:
        t = threading.Thread(target=target)
        t.start()
        t.join()
    finally:
        threading.stack_size(old_size)
        sys.setrecursionlimit(old_limit)
    if "error" in box:
        raise box["error"]
    return box["value"]


def builtin_op(op, targs, args):
    """Semantics of every builtin on canonical runtime values."""
    if op in ("add", "sub", "mul", "div", "rem"):
        t = targs[0]
        return arith(op, t.signed, t.width, args[0], args[1])
    if op == "lt":
        return TRUE if args[0] < args[1] else FALSE
    if op == "eq":
        return TRUE if args[0] == args[1] else FALSE
    if op == "concat":
        return args[0] + args[1]
    if op == "strlen":
        return len(args[0].encode("utf-8"))
    if op == "to_string":
        return str(args[0])
    if op == "to_bystr":
        return bytes(args[0])
    if op == "emp":
        return MapValue()
    if op == "put":
        return args[0].put(args[1], args[2])
    if op == "get":
        m, k = args
        return ADTValue("Some", (m.get(k),)) if m.contains(k) else NONE
    if op == "contains":
        return TRUE if args[0].contains(args[1]) else FALSE
    if op == "remove":
        return args[0].remove(args[1])
    if op == "size":
        return len(args[0])
    raise InternalError(f"unknown builtin {op}")


def match_pattern(p, v, out):
    """Bind ``p`` against ``v`` into ``out``; False when it does not match."""
    if isinstance(p, Wildcard):
        return True
    if isinstance(p, Binder):
        out[p.name] = v
        return True
    if p.name != v.constr:
        return False
    for q, a in zip(p.subs, v.args):
        if not match_pattern(q, a, out):
            return False
    return True


class Interpreter:
    def __init__(self, stack_limit=DEFAULT_STACK_LIMIT, step_limit=DEFAULT_STEP_LIMIT):
        self.stack_limit = stack_limit
        self.step_limit = step_limit
        self.depth = 0
        self.steps = 0
        self._dispatch = {
            Lit: self.ev_lit, Var: self.ev_var, Let: self.ev_let, Fun: self.ev_fun,
            App: self.ev_app, TFun: self.ev_tfun, TApp: self.ev_tapp, Fix: self.ev_fix,
            Constr: self.ev_constr, Match: self.ev_match, Builtin: self.ev_builtin,
            Msg: self.ev_msg, TFunTable: self.ev_table,
        }

    # -- expressions
    def ev(self, e, env, tenv):
        self.steps += 1
        if self.steps > self.step_limit:
            raise step_limit_error(self.step_limit)
        return self._dispatch[type(e)](e, env, tenv)

    def ev_lit(self, e, env, tenv):
        return e.value

    def ev_var(self, e, env, tenv):
        return env[e.name]

    def ev_let(self, e, env, tenv):
        v = self.ev(e.bound, env, tenv)
        env2 = dict(env)
        env2[e.name] = v
        return self.ev(e.body, env2, tenv)

    def ev_fun(self, e, env, tenv):
        return Closure(tuple(n for n, _ in e.params), e.body, env, tenv)

    def ev_fix(self, e, env, tenv):
        env2 = dict(env)
        fn = e.body
        clo = Closure(tuple(n for n, _ in fn.params), fn.body, env2, tenv)
        env2[e.name] = clo
        return clo

    def ev_app(self, e, env, tenv):
        f = self.ev(e.fn, env, tenv)
        args = [self.ev(a, env, tenv) for a in e.args]
        return self.apply(f, args)

    def apply(self, f, args):
        if not isinstance(f, Closure) or len(f.params) != len(args):
            raise InternalError("ill-typed application")
        env2 = dict(f.env)
        for n, a in zip(f.params, args):
            env2[n] = a
        self.depth += 1
        if self.depth > self.stack_limit:
            self.depth = 0
            raise stack_overflow(self.stack_limit)
        try:
            return self.ev(f.body, env2, f.tenv)
        finally:
            self.depth -= 1

    def ev_tfun(self, e, env, tenv):
        return TypeClosure(e.tvar, e.body, env, tenv)

    def ev_tapp(self, e, env, tenv):
        f = self.ev(e.fn, env, tenv)
        t = subst_type(e.targ, tenv) if tenv else e.targ
        if isinstance(f, TypeClosure):
            return self.ev(f.body, f.env, {**f.tenv, f.tvar: t})
        if isinstance(f, TableValue):
            body = f.entries.get(t)
            if body is None:
                raise InternalError("type application has no table entry")
            return self.ev(body, f.env, {})
        raise InternalError("ill-typed type application")

    def ev_table(self, e, env, tenv):
        return TableValue(dict(e.entries), env)

    def ev_constr(self, e, env, tenv):
        return ADTValue(e.name, tuple(self.ev(a, env, tenv) for a in e.args))

    def ev_match(self, e, env, tenv):
        v = env[e.scrut]
        for p, body in e.arms:
            binds = {}
            if match_pattern(p, v, binds):
                if binds:
                    env = {**env, **binds}
                return self.ev(body, env, tenv)
        raise InternalError("match failure")

    def ev_builtin(self, e, env, tenv):
        args = [self.ev(a, env, tenv) for a in e.args]
        return builtin_op(e.op, e.targs, args)

    def ev_msg(self, e, env, tenv):
        fields = []
        for n, a in e.fields:
            t = subst_type(a.ty, tenv) if tenv else a.ty
            fields.append((n, t, self.ev(a, env, tenv)))
        return MsgValue.build(fields)

    # -- statements
    def exec_stmts(self, stmts, env, state, out: Outputs):
        for s in stmts:
            self.steps += 1
            if self.steps > self.step_limit:
                raise step_limit_error(self.step_limit)
            if isinstance(s, SBind):
                env[s.name] = self.ev(s.expr, env, {})
            elif isinstance(s, SLoad):
                env[s.name] = state[s.field]
            elif isinstance(s, SStore):
                state[s.field] = env[s.var]
            elif isinstance(s, SMapGet):
                m, k = state[s.field], env[s.key]
                env[s.name] = ADTValue("Some", (m.get(k),)) if m.contains(k) else NONE
            elif isinstance(s, SMapExists):
                env[s.name] = TRUE if state[s.field].contains(env[s.key]) else FALSE
            elif isinstance(s, SMapPut):
                state[s.field] = state[s.field].put(env[s.key], env[s.var])
            elif isinstance(s, SMapDelete):
                state[s.field] = state[s.field].remove(env[s.key])
            elif isinstance(s, SMatch):
                v = env[s.scrut]
                for p, body in s.arms:
                    binds = {}
                    if match_pattern(p, v, binds):
                        self.exec_stmts(body, {**env, **binds}, state, out)
                        break
                else:
                    raise InternalError("match failure")
            elif isinstance(s, SSend):
                out.messages.append(env[s.var])
            elif isinstance(s, SEvent):
                out.events.append(env[s.var])
            else:
                raise InternalError(f"unexpected statement {type(s).__name__}")

    # -- entries
    def lib_env(self, p: Program, roots):
        env = {}
        for i in lib_closure(p.lib, roots):
            d = p.lib[i]
            env[d.name] = self.ev(d.expr, env, {})
        return env

    def run_main(self, p: Program):
        env = self.lib_env(p, free_vars(p.main))
        return self.ev(p.main, env, {})

    def run_init(self, p: Program):
        roots = set()
        for f in p.contract.fields:
            roots |= free_vars(f.init)
        env = self.lib_env(p, roots)
        return {f.name: self.ev(f.init, env, {}) for f in p.contract.fields}

    def run_transition(self, p: Program, tname, args, state):
        t = next(t for t in p.contract.transitions if t.name == tname)
        params = [n for n, _ in t.params]
        env = self.lib_env(p, stmts_free_vars(t.body, frozenset(params)))
        env.update(zip(params, args))
        state = dict(state)
        out = Outputs()
        self.exec_stmts(t.body, env, state, out)
        return state, out


def _run(prog, thunk):
    try:
        return call_deep(thunk), None
    except MVRuntimeError as exc:
        return None, exc
    except RecursionError:
        return None, InternalError("host recursion limit reached")


def interpret(prog, *, init=False, state=None, message=None,
              stack_limit=DEFAULT_STACK_LIMIT, step_limit=DEFAULT_STEP_LIMIT) -> ExecResult:
    """Execute a program at any pipeline stage.

    Expression programs evaluate their main expression. Contracts either
    deploy (``init=True``: evaluate field initializers) or run the
    transition named by ``message`` against ``state`` (canonical values
    keyed by field name) — decode JSON documents with ``runtime.state``.
    """
    if not isinstance(prog, Program):
        from minivella.passes.closure import ClosuredInterpreter
        it = ClosuredInterpreter(prog, stack_limit, step_limit)
    else:
        it = Interpreter(stack_limit, step_limit)
    info = program_interface(prog)
    if not info.is_contract:
        value, err = _run(prog, lambda: it.run_main(prog))
        return ExecResult.for_expr(info.result_type, value, err)
    if init:
        st, err = _run(prog, lambda: it.run_init(prog))
        return ExecResult.for_contract(info.fields, st, Outputs(), err)
    tname, args = message
    res, err = _run(prog, lambda: it.run_transition(prog, tname, args, state))
    if err is not None:
        return ExecResult.for_contract(info.fields, dict(state), Outputs(), err)
    return ExecResult.for_contract(info.fields, res[0], res[1], None)


class Interface:
    """Entry-point signatures of a program, independent of its stage."""

    def __init__(self, is_contract, result_type=None, fields=(), transitions=None, adts=()):
        self.is_contract = is_contract
        self.result_type = result_type
        self.fields = tuple(fields)
        self.transitions = transitions or {}
        self.adts = tuple(adts)


def program_interface(prog) -> Interface:
    if isinstance(prog, Program):
        if prog.contract is None:
            return Interface(False, result_type=prog.main.ty, adts=prog.adts)
        c = prog.contract
        return Interface(True, fields=[(f.name, f.type) for f in c.fields],
                         transitions={t.name: tuple(t.params) for t in c.transitions},
                         adts=prog.adts)
    return prog.interface()
