"""Pure-Python dispatch loop (fallback backend; also the debug backend)."""

from __future__ import annotations

from minivella.codegen.ir import INT_KINDS
from minivella.interp import stack_overflow, step_limit_error
from minivella.runtime.errors import InternalError
from minivella.runtime.wideint import arith, int_range
from minivella.vm.heap import ADT, ALLOCA, ENV
from minivella.vm.loader import (
    ALLOC, ARITHOP, BR, CONST, DISPATCH, EQ, EQ_INT, EQ_PAIR, FNADDR, FST, ICALL, LOAD, LT,
    MKPAIR, MOV, NEWOBJ, RET, RETV, RTCALL, SND, STORE, SWITCH, TABADDR, UNREACHABLE,
)
from minivella.vm.loader import ALLOCA as ALLOCA_OP

_KINDS = [(k[0] == "i", int(k[1:])) for k in INT_KINDS]
_RANGES = [int_range(s, w) for s, w in _KINDS]
_OPS = ("add", "sub", "mul", "div", "rem")


def run(ctx, fid, args):
    """Execute function ``fid`` with the given argument registers; returns
    its result register value (None for void functions)."""
    img = ctx.image
    code = img.code
    consts = img.consts
    funcs = img.functions
    nfun = len(funcs)
    f_pc = [f.pc for f in funcs]
    f_nregs = [f.nregs for f in funcs]
    f_counted = [f.counted for f in funcs]
    f_sig = [f.sig for f in funcs]
    tables = img.tables
    arena = ctx.arena
    rt = ctx.runtime
    rtcalls = rt.calls
    alloc = arena.alloc
    load = arena.load
    store = arena.store
    stack_limit = ctx.stack_limit
    step_limit = ctx.step_limit
    steps = ctx.steps
    ranges = _RANGES

    regs = [None] * f_nregs[fid]
    regs[:len(args)] = args
    counted = f_counted[fid]
    depth = 1 if counted else 0
    if depth > stack_limit:
        raise stack_overflow(stack_limit)
    frames = []
    pc = f_pc[fid]
    try:
        while True:
            steps += 1
            if steps > step_limit:
                raise step_limit_error(step_limit)
            op = code[pc]
            if op == LOAD:
                regs[code[pc + 1]] = load(regs[code[pc + 2]] + code[pc + 3], code[pc + 4])
                pc += 5
            elif op == MOV:
                regs[code[pc + 1]] = regs[code[pc + 2]]
                pc += 3
            elif op == CONST:
                regs[code[pc + 1]] = consts[code[pc + 2]]
                pc += 3
            elif op == ARITHOP:
                a = regs[code[pc + 2]]
                b = regs[code[pc + 3]]
                opk = code[pc + 4]
                o = opk >> 3
                k = opk & 7
                if o == 0:
                    r = a + b
                elif o == 1:
                    r = a - b
                elif o == 2:
                    r = a * b
                else:
                    r = arith(_OPS[o], _KINDS[k][0], _KINDS[k][1], a, b)
                lo, hi = ranges[k]
                if r < lo or r > hi:
                    arith(_OPS[o], _KINDS[k][0], _KINDS[k][1], a, b)
                regs[code[pc + 1]] = r
                pc += 5
            elif op == ICALL:
                callee = regs[code[pc + 2]]
                n = code[pc + 4]
                if not 0 <= callee < nfun or f_sig[callee] != code[pc + 3]:
                    raise InternalError("indirect call target does not match the call signature")
                nr = [None] * f_nregs[callee]
                base = pc + 5
                for i in range(n):
                    nr[i] = regs[code[base + i]]
                frames.append((regs, base + n, code[pc + 1], counted))
                counted = f_counted[callee]
                if counted:
                    depth += 1
                    if depth > stack_limit:
                        raise stack_overflow(stack_limit)
                regs = nr
                pc = f_pc[callee]
            elif op == SWITCH:
                v = regs[code[pc + 1]]
                n = code[pc + 2]
                p = pc + 3
                target = code[p + 2 * n]
                for i in range(n):
                    if code[p] == v:
                        target = code[p + 1]
                        break
                    p += 2
                pc = target
            elif op == BR:
                pc = code[pc + 1]
            elif op == RET or op == RETV:
                v = regs[code[pc + 1]] if op == RET else None
                if counted:
                    depth -= 1
                if not frames:
                    return v
                regs, pc, d, counted = frames.pop()
                if d >= 0:
                    regs[d] = v
            elif op == FST:
                regs[code[pc + 1]] = regs[code[pc + 2]][0]
                pc += 3
            elif op == SND:
                regs[code[pc + 1]] = regs[code[pc + 2]][1]
                pc += 3
            elif op == STORE:
                store(regs[code[pc + 1]] + code[pc + 2], code[pc + 4], regs[code[pc + 3]])
                pc += 5
            elif op == MKPAIR:
                regs[code[pc + 1]] = (regs[code[pc + 2]], regs[code[pc + 3]])
                pc += 4
            elif op == NEWOBJ:
                a = alloc(code[pc + 2], ADT)
                store(a, 0, code[pc + 3])
                regs[code[pc + 1]] = a
                pc += 4
            elif op == EQ:
                x = regs[code[pc + 2]]
                y = regs[code[pc + 3]]
                ek = code[pc + 4]
                if ek == EQ_INT:
                    r = x == y
                elif ek == EQ_PAIR:
                    r = x[1] == y[1] and arena.read(x[0], x[1]) == arena.read(y[0], y[1])
                else:
                    r = x == y
                regs[code[pc + 1]] = arena.new_bool(r)
                pc += 5
            elif op == LT:
                regs[code[pc + 1]] = arena.new_bool(regs[code[pc + 2]] < regs[code[pc + 3]])
                pc += 5
            elif op == FNADDR or op == TABADDR:
                regs[code[pc + 1]] = code[pc + 2]
                pc += 3
            elif op == ALLOC:
                regs[code[pc + 1]] = alloc(code[pc + 2], ENV)
                pc += 3
            elif op == ALLOCA_OP:
                regs[code[pc + 1]] = alloc(code[pc + 2], ALLOCA)
                pc += 3
            elif op == DISPATCH:
                t = regs[code[pc + 2]]
                fn = tables[t].get(code[pc + 3]) if 0 <= t < len(tables) else None
                if fn is None:
                    raise InternalError("type application has no table entry")
                regs[code[pc + 1]] = fn
                pc += 4
            elif op == RTCALL:
                n = code[pc + 3]
                base = pc + 4
                cargs = [regs[code[base + i]] for i in range(n)]
                m = code[base + n]
                meta = code[base + n + 1:base + n + 1 + m]
                r = rtcalls[code[pc + 2]](cargs, meta)
                d = code[pc + 1]
                if d >= 0:
                    regs[d] = r
                pc = base + n + 1 + m
            elif op == UNREACHABLE:
                raise InternalError("match failure")
            else:
                raise InternalError(f"bad opcode {op} at {pc}")
    finally:
        ctx.steps = steps
