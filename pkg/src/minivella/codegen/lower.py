"""Lowering of closure-converted programs to the target IR."""

from __future__ import annotations

from minivella.codegen.descriptors import DescriptorTable
from minivella.codegen.ir import Block, EntryIR, Function, Instr, Module, Param, TableIR
from minivella.codegen.layout import (
    by_reference, constructor_layout, layout_of, record_layout, value_kind,
)
from minivella.core import (
    ADTEnv, ADTType, Binder, ByStrXType, ConstructorPat, FunType, MapType, BOOL, show_type,
)
from minivella.passes.closure import (
    Bind, BuiltinOp, CallClosure, ClosuredProgram, ClosureMake, CLit, ConstrMake, CVar, Event,
    FieldLoad, MapDeleteField, MapExistsField, MapGetField, MapPutField, MatchStmt, MsgBuild,
    Return, SelfClosure, Send, StoreField, TableCall, TableMake,
)
from minivella.runtime.errors import InternalError
from minivella.runtime.values import canonical_field_order


class CodegenError(InternalError):
    pass


def _option(t):
    return ADTType("Option", (t,))


# --------------------------------------------------------------------------
# Descriptors

def build_type_descriptors(p: ClosuredProgram) -> DescriptorTable:
    """Intern every ground type the program mentions, in a deterministic
    traversal order (fields, transitions, tables, functions)."""
    d = DescriptorTable(p.adts)
    for _, t in p.fields:
        d.intern(t)
    for _, params in p.transitions:
        for _, t in params:
            d.intern(t)
    if p.result_type is not None:
        d.intern(p.result_type)
    for tb in p.tables:
        for _, t in tb.env:
            d.intern(t)
        for t, _ in tb.entries:
            d.intern(t)
    for f in p.functions:
        for _, t in f.env + f.params:
            d.intern(t)
        if f.result is not None:
            d.intern(f.result)
        _intern_stmts(d, f.body, dict(p.fields))
    return d


def _intern_stmts(d, stmts, fields):
    for s in stmts:
        if isinstance(s, Bind):
            d.intern(s.ty)
            r = s.rhs
            if isinstance(r, TableCall):
                d.intern(r.targ)
            elif isinstance(r, BuiltinOp):
                for t in r.targs:
                    d.intern(t)
                if r.op == "get":
                    d.intern(MapType(*r.targs))
            elif isinstance(r, MsgBuild):
                for _, t, _ in r.fields:
                    d.intern(t)
            elif isinstance(r, MapGetField):
                d.intern(_option(fields[r.field].value))
        elif isinstance(s, MatchStmt):
            for p, body in s.arms:
                _intern_stmts(d, body, fields)


# --------------------------------------------------------------------------
# Functions

def _param_slots(types):
    return ["byref" if by_reference(t) else value_kind(t) for t in types]


def call_signature(ft: FunType) -> str:
    parts = ["env"]
    ret = value_kind(ft.result)
    if by_reference(ft.result):
        parts.append("sret")
        ret = "void"
    parts += _param_slots(ft.params)
    return f"({', '.join(parts)}) -> {ret}"


def thunk_signature(t) -> str:
    if by_reference(t):
        return "(env, sret) -> void"
    return f"(env) -> {value_kind(t)}"


class _Lowerer:
    def __init__(self, p: ClosuredProgram, d: DescriptorTable):
        self.p = p
        self.d = d
        self.adts = ADTEnv(p.adts)
        self.data = []
        self.data_index = {}
        self.field_index = {n: i for i, (n, _) in enumerate(p.fields)}
        self.field_types = dict(p.fields)

    def datum(self, b: bytes) -> int:
        i = self.data_index.get(b)
        if i is None:
            i = self.data_index[b] = len(self.data)
            self.data.append(b)
        return i

    def descr(self, t) -> int:
        return self.d.intern(t)


class _FnLowerer:
    def __init__(self, lw: _Lowerer, fd):
        self.lw = lw
        self.fd = fd
        self.blocks = []
        self.cur = None
        self.ntmp = 0
        self.types = {}
        self.sret = fd.result is not None and by_reference(fd.result)

    # -- builder
    def block(self):
        b = Block(f"bb{len(self.blocks)}")
        self.blocks.append(b)
        return b

    def at(self, b):
        self.cur = b

    def emit(self, op, dst, *args):
        self.cur.instrs.append(Instr(op, dst, tuple(args)))
        return dst

    def tmp(self):
        self.ntmp += 1
        return f".{self.ntmp}"

    def kind(self, var):
        return value_kind(self.types[var])

    # -- function
    def run(self) -> Function:
        fd = self.fd
        params = [Param(".env", "ptr", "env")]
        if self.sret:
            params.append(Param(".sret", "ptr", "sret"))
        self.at(self.block())
        for n, t in fd.params:
            self.types[n] = t
            if by_reference(t):
                params.append(Param(f".p.{n}", "ptr", "byref"))
                self.emit(f"load.{value_kind(t)}", n, f".p.{n}", 0)
            else:
                params.append(Param(n, value_kind(t)))
        slots, _ = record_layout([t for _, t in fd.env])
        for (n, t), (off, k) in zip(fd.env, slots):
            self.types[n] = t
            self.emit(f"load.{k}", n, ".env", off)
        if fd.self_name:
            self.types[fd.self_name] = FunType(tuple(t for _, t in fd.params), fd.result)
        self.stmts(fd.body)
        if fd.result is None:
            ret = "void"
        else:
            ret = "void" if self.sret else value_kind(fd.result)
        return Function(fd.name, fd.kind, params, ret, self.blocks)

    # -- statements
    def stmts(self, stmts):
        for s in stmts:
            if isinstance(s, Bind):
                self.types[s.name] = s.ty
                self.rhs(s.name, s.ty, s.rhs)
            elif isinstance(s, MatchStmt):
                self.match(s)
            elif isinstance(s, Return):
                if s.var is None:
                    self.emit("retvoid", None)
                elif self.sret:
                    self.emit(f"store.{value_kind(self.fd.result)}", None, ".sret", 0, s.var)
                    self.emit("retvoid", None)
                else:
                    self.emit("ret", None, s.var)
                return
            elif isinstance(s, StoreField):
                self.state_call("void", "state_store", (s.var,), s.field)
            elif isinstance(s, MapPutField):
                self.state_call("void", "state_map_put", (s.key, s.var), s.field)
            elif isinstance(s, MapDeleteField):
                self.state_call("void", "state_map_delete", (s.key,), s.field)
            elif isinstance(s, Send):
                self.emit("rtcall.void", None, "send", (s.var,), ())
            elif isinstance(s, Event):
                self.emit("rtcall.void", None, "event", (s.var,), ())
            else:
                raise CodegenError(f"codegen: unexpected statement {type(s).__name__}")

    def state_call(self, rk, name, args, fname, extra=(), dst=None):
        lw = self.lw
        t = lw.field_types[fname]
        meta = (lw.field_index[fname], lw.descr(t)) + tuple(extra)
        self.emit(f"rtcall.{rk}", dst, name, tuple(args), meta)

    def match(self, s: MatchStmt):
        t = s.ty
        arms = []
        for p, body in s.arms:
            arms.append((p, body))
            if not isinstance(p, ConstructorPat):
                break
        if not isinstance(arms[0][0], ConstructorPat):
            p, body = arms[0]
            self.bind_whole(p, s.scrut, t)
            self.stmts(body)
            return
        if not isinstance(t, ADTType):
            raise CodegenError(f"codegen: constructor match on {show_type(t)}")
        tag = self.tmp()
        self.emit("load.tag", tag, s.scrut, 0)
        switch_block = self.cur
        join = None
        cases, seen, default = [], set(), None
        bodies = []
        for p, body in arms:
            b = self.block()
            if isinstance(p, ConstructorPat):
                tg = self.lw.adts.tag(p.name)
                if tg in seen:
                    continue
                seen.add(tg)
                cases.append((tg, b.label))
            else:
                default = b.label
            bodies.append((b, p, body))
        if default is None:
            ub = self.block()
            ub.instrs.append(Instr("unreachable", None, ()))
            default = ub.label
        switch_block.instrs.append(Instr("switch", None, (tag, tuple(cases), default)))
        ends = []
        for b, p, body in bodies:
            self.at(b)
            if isinstance(p, ConstructorPat):
                cl = constructor_layout(self.lw.adts, p.name, t)
                for q, (off, k, ft) in zip(p.subs, cl.fields):
                    if isinstance(q, Binder):
                        self.types[q.name] = ft
                        self.emit(f"load.{k}", q.name, s.scrut, off)
                    elif isinstance(q, ConstructorPat):
                        raise CodegenError("codegen: nested pattern reached lowering")
            else:
                self.bind_whole(p, s.scrut, t)
            self.stmts(body)
            if not self.terminated():
                ends.append(self.cur)
        if ends:
            join = self.block()
            for b in ends:
                b.instrs.append(Instr("br", None, (join.label,)))
            self.at(join)
        else:
            self.at(self.block())
            self.emit("unreachable", None)

    def bind_whole(self, p, scrut, t):
        if isinstance(p, Binder):
            self.types[p.name] = t
            self.emit("mov", p.name, scrut)

    def terminated(self):
        return bool(self.cur.instrs) and self.cur.instrs[-1].base in (
            "br", "switch", "ret", "retvoid", "unreachable")

    # -- right-hand sides
    def rhs(self, x, t, r):
        lw = self.lw
        if isinstance(r, CVar):
            self.emit("mov", x, r.name)
        elif isinstance(r, CLit):
            lt = r.type
            k = value_kind(lt)
            if k == "pair":
                v = r.value.encode("utf-8") if isinstance(r.value, str) else bytes(r.value)
                self.emit("conststr", x, lw.datum(v))
            elif isinstance(lt, ByStrXType):
                self.emit("constbytes", x, lw.datum(bytes(r.value)))
            else:
                self.emit(f"const.{k}", x, int(r.value))
        elif isinstance(r, ClosureMake):
            fd = lw.p.fun(r.fun)
            env = self.env_record(fd.env, r.captured)
            code = self.tmp()
            self.emit("fnaddr", code, r.fun)
            self.emit("mkpair", x, code, env)
        elif isinstance(r, TableMake):
            tb = lw.p.table(r.table)
            env = self.env_record(tb.env, r.captured)
            code = self.tmp()
            self.emit("tabaddr", code, r.table)
            self.emit("mkpair", x, code, env)
        elif isinstance(r, SelfClosure):
            code = self.tmp()
            self.emit("fnaddr", code, self.fd.name)
            self.emit("mkpair", x, code, ".env")
        elif isinstance(r, CallClosure):
            ft = self.types[r.fn]
            if not isinstance(ft, FunType):
                raise CodegenError(f"codegen: call of non-function {r.fn}")
            code, env = self.tmp(), self.tmp()
            self.emit("fst.u64", code, r.fn)
            self.emit("snd.ptr", env, r.fn)
            args = [env]
            sret = None
            if by_reference(ft.result):
                sret = self.tmp()
                self.emit("alloca", sret, layout_of(ft.result).size)
                args.append(sret)
            for a, pt in zip(r.args, ft.params):
                if by_reference(pt):
                    slot = self.tmp()
                    self.emit("alloca", slot, layout_of(pt).size)
                    self.emit(f"store.{value_kind(pt)}", None, slot, 0, a)
                    args.append(slot)
                else:
                    args.append(a)
            sig = call_signature(ft)
            if sret is not None:
                self.emit("icall.void", None, code, tuple(args), sig)
                self.emit(f"load.{value_kind(ft.result)}", x, sret, 0)
            else:
                self.emit(f"icall.{value_kind(ft.result)}", x, code, tuple(args), sig)
        elif isinstance(r, TableCall):
            tid, env, fn = self.tmp(), self.tmp(), self.tmp()
            self.emit("fst.u64", tid, r.table)
            self.emit("snd.ptr", env, r.table)
            self.emit("dispatch", fn, tid, lw.descr(r.targ))
            sig = thunk_signature(t)
            if by_reference(t):
                sret = self.tmp()
                self.emit("alloca", sret, layout_of(t).size)
                self.emit("icall.void", None, fn, (env, sret), sig)
                self.emit(f"load.{value_kind(t)}", x, sret, 0)
            else:
                self.emit(f"icall.{value_kind(t)}", x, fn, (env,), sig)
        elif isinstance(r, ConstrMake):
            cl = constructor_layout(lw.adts, r.name, r.type)
            self.emit("newobj", x, cl.size, cl.tag)
            for a, (off, k, _) in zip(r.args, cl.fields):
                self.emit(f"store.{k}", None, x, off, a)
        elif isinstance(r, BuiltinOp):
            self.builtin(x, t, r)
        elif isinstance(r, MsgBuild):
            fields = canonical_field_order(r.fields)
            meta = []
            for n, ft, _ in fields:
                meta += [lw.datum(n.encode("utf-8")), lw.descr(ft)]
            self.emit("rtcall.ref", x, "msg_build", tuple(v for _, _, v in fields), tuple(meta))
        elif isinstance(r, FieldLoad):
            self.state_call(value_kind(t), "state_load", (), r.field, dst=x)
        elif isinstance(r, MapGetField):
            self.state_call("ref", "state_map_get", (r.key,), r.field, (lw.descr(t),), dst=x)
        elif isinstance(r, MapExistsField):
            self.state_call("ref", "state_map_exists", (r.key,), r.field, dst=x)
        else:
            raise CodegenError(f"codegen: unexpected operation {type(r).__name__}")

    def env_record(self, env, captured):
        slots, size = record_layout([t for _, t in env])
        e = self.tmp()
        self.emit("alloc.env", e, size)
        for v, (off, k) in zip(captured, slots):
            self.emit(f"store.{k}", None, e, off, v)
        return e

    def builtin(self, x, t, r: BuiltinOp):
        op, a = r.op, r.args
        lw = self.lw
        if op in ("add", "sub", "mul", "div", "rem", "lt", "eq"):
            self.emit(f"{op}.{value_kind(r.targs[0])}", x, a[0], a[1])
        elif op == "concat":
            self.emit("rtcall.pair", x, "concat", tuple(a), ())
        elif op == "strlen":
            self.emit("snd.u32", x, a[0])
        elif op == "to_string":
            self.emit("rtcall.pair", x, "to_string", tuple(a), (lw.descr(r.targs[0]),))
        elif op == "to_bystr":
            self.emit("rtcall.pair", x, "to_bystr", tuple(a), (lw.descr(r.targs[0]),))
        elif op == "emp":
            self.emit("rtcall.ref", x, "map_new", (), (lw.descr(t),))
        else:
            mt = lw.descr(MapType(*r.targs))
            if op == "put":
                self.emit("rtcall.ref", x, "map_put", tuple(a), (mt,))
            elif op == "get":
                self.emit("rtcall.ref", x, "map_get", tuple(a), (mt, lw.descr(t)))
            elif op == "contains":
                self.emit("rtcall.ref", x, "map_contains", tuple(a), (mt,))
            elif op == "remove":
                self.emit("rtcall.ref", x, "map_remove", tuple(a), (mt,))
            elif op == "size":
                self.emit("rtcall.u32", x, "map_size", tuple(a), (mt,))
            else:
                raise CodegenError(f"codegen: unknown builtin {op}")


def lower(p: ClosuredProgram, d: DescriptorTable = None) -> Module:
    if d is None:
        d = build_type_descriptors(p)
    lw = _Lowerer(p, d)
    d.intern(BOOL)
    functions = [_FnLowerer(lw, fd).run() for fd in p.functions]
    tables = [TableIR(tb.name, tuple((lw.descr(t), th) for t, th in tb.entries))
              for tb in p.tables]
    entries = []
    if p.result_type is not None:
        entries.append(EntryIR("main", "$main", "$main", (), lw.descr(p.result_type)))
    if p.is_contract:
        entries.append(EntryIR("init", "$init", "$init"))
        for name, params in p.transitions:
            entries.append(EntryIR("transition", name, name,
                                   tuple((n, lw.descr(t)) for n, t in params)))
    fields = [(n, lw.descr(t)) for n, t in p.fields]
    return Module(d, lw.data, tables, functions, fields, entries, p.is_contract)
