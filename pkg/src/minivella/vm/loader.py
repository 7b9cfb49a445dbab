"""Loading: resolve a target module into flat integer code.

Every function's blocks are laid out consecutively; registers become frame
slot numbers (parameters first), labels become absolute code offsets and
symbols become function/table ids. All resolution happens here, so a loaded
image never fails on a missing symbol at run time.

Instruction encodings (one opcode word followed by its operands)::

    MOV d a            CONST d c          ARITH d a b opk     LT d a b k
    EQ d a b ek        NEWOBJ d size tag  ALLOC d size        ALLOCA d size
    STORE base off val mk                 LOAD d base off mk
    FNADDR d fid       TABADDR d tid      MKPAIR d a b        FST d a      SND d a
    ICALL d code sig n a1..an             DISPATCH d t ty
    RTCALL d name n a1..an m x1..xm       SWITCH a n (v pc)*n default
    BR pc              RET a              RETV                UNREACHABLE

``d`` is -1 for instructions without a result.
"""

from __future__ import annotations

from dataclasses import dataclass

from minivella.codegen.ir import ARITH, INT_KINDS, RUNTIME_CALLS, IRError, Module

(MOV, CONST, ARITHOP, LT, EQ, NEWOBJ, ALLOC, ALLOCA, STORE, LOAD, FNADDR, TABADDR, MKPAIR,
 FST, SND, ICALL, DISPATCH, RTCALL, SWITCH, BR, RET, RETV, UNREACHABLE) = range(23)

OPNAMES = ("MOV CONST ARITH LT EQ NEWOBJ ALLOC ALLOCA STORE LOAD FNADDR TABADDR MKPAIR FST SND "
           "ICALL DISPATCH RTCALL SWITCH BR RET RETV UNREACHABLE").split()

# memory kinds: 0 tag byte, 1..8 integers (INT_KINDS order), 9 reference or
# pointer (8 bytes), 10 pair (2 x 8 bytes), 16+X inline byte string of X bytes
MK_TAG, MK_REF, MK_PAIR, MK_BYTES = 0, 9, 10, 16

# equality kinds
EQ_INT, EQ_PAIR, EQ_BYTES = 0, 1, 2

RT_NAMES = tuple(RUNTIME_CALLS)
STATIC_BASE = 8          # address 0 is the null reference


class LoadError(Exception):
    pass


def mem_kind(kind: str) -> int:
    if kind == "tag":
        return MK_TAG
    if kind in INT_KINDS:
        return 1 + INT_KINDS.index(kind)
    if kind in ("ref", "ptr"):
        return MK_REF
    if kind == "pair":
        return MK_PAIR
    if kind.startswith("b") and kind[1:].isdigit():
        return MK_BYTES + int(kind[1:])
    raise LoadError(f"unknown value kind {kind!r}")


def mem_size(mk: int) -> int:
    if mk == MK_TAG:
        return 1
    if 1 <= mk <= 8:
        return int(INT_KINDS[mk - 1][1:]) // 8
    if mk == MK_REF:
        return 8
    if mk == MK_PAIR:
        return 16
    return mk - MK_BYTES


@dataclass
class FunctionInfo:
    name: str
    kind: str
    pc: int
    nregs: int
    nparams: int
    sig: int
    counted: bool
    regnames: tuple


@dataclass
class Image:
    code: list
    consts: list
    functions: list            # FunctionInfo by id
    tables: list               # {descriptor index: function id} by table id
    table_names: list
    sigs: list                 # signature strings by id
    data: list                 # (address, bytes)
    static_end: int
    module: Module

    def function_id(self, name) -> int:
        for i, f in enumerate(self.functions):
            if f.name == name:
                return i
        raise KeyError(name)

    @property
    def descriptors(self):
        return self.module.descriptors


def load(m: Module) -> Image:
    fids = {f.name: i for i, f in enumerate(m.functions)}
    if len(fids) != len(m.functions):
        raise LoadError("duplicate function definition")
    tids = {t.name: i for i, t in enumerate(m.tables)}
    sigs, sig_ids = [], {}

    def sig_id(s):
        if s not in sig_ids:
            sig_ids[s] = len(sigs)
            sigs.append(s)
        return sig_ids[s]

    # static data: laid out from STATIC_BASE in pool order
    data, addr = [], STATIC_BASE
    for b in m.data:
        data.append((addr, bytes(b)))
        addr += len(b)
    static_end = addr

    nd = len(m.descriptors)
    tables = []
    for t in m.tables:
        ent = {}
        for idx, fn in t.entries:
            if fn not in fids:
                raise LoadError(f"dispatch @{t.name}: unresolved function @{fn}")
            if not 0 <= idx < nd:
                raise LoadError(f"dispatch @{t.name}: bad descriptor index {idx}")
            ent[idx] = fids[fn]
        tables.append(ent)

    code, consts, infos = [], [], []
    const_ids = {}

    def const(v):
        key = (type(v), v)
        if key not in const_ids:
            const_ids[key] = len(consts)
            consts.append(v)
        return const_ids[key]

    for f in m.functions:
        where = f"@{f.name}"
        regs = {}
        for p in f.params:
            if p.reg in regs:
                raise LoadError(f"{where}: duplicate parameter %{p.reg}")
            regs[p.reg] = len(regs)
        for b in f.blocks:
            for ins in b.instrs:
                if ins.dst is not None and ins.dst not in regs:
                    regs[ins.dst] = len(regs)
        pc0 = len(code)
        labels, fixups = {}, []

        def reg(name, ctx):
            if name not in regs:
                raise LoadError(f"{ctx}: undefined register %{name}")
            return regs[name]

        for b in f.blocks:
            labels[b.label] = len(code)
            for ins in b.instrs:
                ctx = f"{where}/{b.label}"
                try:
                    _encode(ins, code, fixups, regs, reg, ctx, fids, tids, const, sig_id,
                            data, nd)
                except IRError as exc:
                    raise LoadError(f"{ctx}: {exc}") from None
        for pos, label, ctx in fixups:
            if label not in labels:
                raise LoadError(f"{ctx}: unknown label {label}")
            code[pos] = labels[label]
        names = [None] * len(regs)
        for n, i in regs.items():
            names[i] = n
        infos.append(FunctionInfo(f.name, f.kind, pc0, len(regs), len(f.params),
                                  sig_id(f.sig), f.kind == "fun", tuple(names)))
    for e in m.entries:
        if e.function not in fids:
            raise LoadError(f"entry {e.name}: unresolved function @{e.function}")
    return Image(code, consts, infos, tables, [t.name for t in m.tables], sigs, data,
                 static_end, m)


def _encode(ins, code, fixups, regs, reg, ctx, fids, tids, const, sig_id, data, nd):
    b, s = ins.base, ins.suffix
    d = regs[ins.dst] if ins.dst is not None else -1
    a = ins.args
    if b == "mov":
        code += [MOV, d, reg(a[0], ctx)]
    elif b == "const":
        mem_kind(s)
        code += [CONST, d, const(int(a[0]))]
    elif b in ("conststr", "constbytes"):
        if not 0 <= a[0] < len(data):
            raise LoadError(f"{ctx}: unknown data item {a[0]}")
        addr, raw = data[a[0]]
        code += [CONST, d, const((addr, len(raw)) if b == "conststr" else raw)]
    elif b in ARITH:
        if s not in INT_KINDS:
            raise LoadError(f"{ctx}: {ins.op} on non-integer kind")
        code += [ARITHOP, d, reg(a[0], ctx), reg(a[1], ctx),
                 ARITH.index(b) * 8 + INT_KINDS.index(s)]
    elif b == "lt":
        if s not in INT_KINDS:
            raise LoadError(f"{ctx}: {ins.op} on non-integer kind")
        code += [LT, d, reg(a[0], ctx), reg(a[1], ctx), INT_KINDS.index(s)]
    elif b == "eq":
        ek = EQ_INT if s in INT_KINDS else EQ_PAIR if s == "pair" else EQ_BYTES
        code += [EQ, d, reg(a[0], ctx), reg(a[1], ctx), ek]
    elif b == "newobj":
        code += [NEWOBJ, d, a[0], a[1]]
    elif b == "alloc":
        code += [ALLOC, d, a[0]]
    elif b == "alloca":
        code += [ALLOCA, d, a[0]]
    elif b == "store":
        code += [STORE, reg(a[0], ctx), a[1], reg(a[2], ctx), mem_kind(s)]
    elif b == "load":
        code += [LOAD, d, reg(a[0], ctx), a[1], mem_kind(s)]
    elif b == "fnaddr":
        if a[0] not in fids:
            raise LoadError(f"{ctx}: unresolved function @{a[0]}")
        code += [FNADDR, d, fids[a[0]]]
    elif b == "tabaddr":
        if a[0] not in tids:
            raise LoadError(f"{ctx}: unresolved dispatch table @{a[0]}")
        code += [TABADDR, d, tids[a[0]]]
    elif b == "mkpair":
        code += [MKPAIR, d, reg(a[0], ctx), reg(a[1], ctx)]
    elif b == "fst":
        code += [FST, d, reg(a[0], ctx)]
    elif b == "snd":
        code += [SND, d, reg(a[0], ctx)]
    elif b == "icall":
        callee, args, sig = a
        code += [ICALL, d, reg(callee, ctx), sig_id(sig), len(args)]
        code += [reg(x, ctx) for x in args]
    elif b == "dispatch":
        if not 0 <= a[1] < nd:
            raise LoadError(f"{ctx}: bad descriptor index {a[1]}")
        code += [DISPATCH, d, reg(a[0], ctx), a[1]]
    elif b == "rtcall":
        name, args, meta = a
        if name not in RT_NAMES:
            raise LoadError(f"{ctx}: unknown runtime call {name}")
        code += [RTCALL, d, RT_NAMES.index(name), len(args)]
        code += [reg(x, ctx) for x in args]
        code += [len(meta), *meta]
    elif b == "switch":
        r, cases, default = a
        code += [SWITCH, reg(r, ctx), len(cases)]
        for v, lab in cases:
            code.append(v)
            fixups.append((len(code), lab, ctx))
            code.append(-1)
        fixups.append((len(code), default, ctx))
        code.append(-1)
    elif b == "br":
        code.append(BR)
        fixups.append((len(code), a[0], ctx))
        code.append(-1)
    elif b == "ret":
        code += [RET, reg(a[0], ctx)]
    elif b == "retvoid":
        code.append(RETV)
    elif b == "unreachable":
        code.append(UNREACHABLE)
    else:
        raise LoadError(f"{ctx}: malformed instruction {ins.op}")
