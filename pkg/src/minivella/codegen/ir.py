"""Target IR: typed registers, explicit heap access, tag switches, indirect
calls through closures and runtime calls carrying descriptor indices.

Textual form (one item per line)::

    tydescr 0 = int u32
    data 0 = 0x68656c6c6f
    field count 0
    entry main @$main -> 0
    dispatch @id$table$1 = [0 -> @id$at$2]
    define fun @f$3(ptr env %env, u32 %x) -> u32 {
    bb0:
      %r = add.u32 %x, %x
      ret %r
    }
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from minivella.codegen.descriptors import DescriptorTable, parse_descriptor_lines

INT_KINDS = ("i32", "u32", "i64", "u64", "i128", "u128", "i256", "u256")
ARITH = ("add", "sub", "mul", "div", "rem")
TERMINATORS = ("br", "switch", "ret", "retvoid", "unreachable")

# runtime call name -> number of value arguments
RUNTIME_CALLS = {
    "concat": 2, "to_string": 1, "to_bystr": 1,
    "map_new": 0, "map_put": 3, "map_get": 2, "map_contains": 2, "map_remove": 2,
    "map_size": 1, "msg_build": None,
    "state_load": 0, "state_store": 1, "state_map_get": 1, "state_map_exists": 1,
    "state_map_put": 2, "state_map_delete": 1, "send": 1, "event": 1,
}

# operand signature per base opcode:
#   r register, i immediate, s symbol, L label, A (register list), G signature,
#   N runtime-call name, M metadata list, C switch cases
OPERANDS = {
    "const": "i", "conststr": "i", "constbytes": "i", "mov": "r",
    **{op: "rr" for op in ARITH}, "lt": "rr", "eq": "rr",
    "newobj": "ii", "alloc": "i", "alloca": "i",
    "store": "rir", "load": "ri",
    "fnaddr": "s", "tabaddr": "s", "mkpair": "rr", "fst": "r", "snd": "r",
    "icall": "rAG", "dispatch": "ri", "rtcall": "NAM",
    "switch": "rCL", "br": "L", "ret": "r", "retvoid": "", "unreachable": "",
}
NO_DST = ("store", "switch", "br", "ret", "retvoid", "unreachable")


class IRError(Exception):
    pass


@dataclass
class Instr:
    op: str                      # base opcode, optionally ".suffix"
    dst: Optional[str]
    args: tuple

    @property
    def base(self) -> str:
        return self.op.split(".", 1)[0]

    @property
    def suffix(self) -> str:
        parts = self.op.split(".", 1)
        return parts[1] if len(parts) > 1 else ""


@dataclass
class Block:
    label: str
    instrs: list = field(default_factory=list)


@dataclass
class Param:
    reg: str
    kind: str
    attr: str = ""               # "", "env", "sret", "byref"


def signature(params, ret) -> str:
    parts = [p.attr if p.attr else p.kind for p in params]
    return f"({', '.join(parts)}) -> {ret}"


@dataclass
class Function:
    name: str
    kind: str                    # fun | thunk | entry
    params: list
    ret: str                     # value kind or "void"
    blocks: list

    @property
    def sig(self) -> str:
        return signature(self.params, self.ret)


@dataclass
class TableIR:
    name: str
    entries: tuple               # ((descriptor index, function name), ...)


@dataclass
class EntryIR:
    kind: str                    # main | init | transition
    name: str
    function: str
    params: tuple = ()           # ((name, descriptor index), ...)
    result: Optional[int] = None


@dataclass
class Module:
    descriptors: DescriptorTable
    data: list
    tables: list
    functions: list
    fields: list                 # ((name, descriptor index), ...)
    entries: list
    is_contract: bool = False

    def function(self, name) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def entry(self, kind, name=None) -> EntryIR:
        for e in self.entries:
            if e.kind == kind and (name is None or e.name == name):
                return e
        raise KeyError(name or kind)


# --------------------------------------------------------------------------
# Printing

def _operand_text(kind, a):
    if kind == "r":
        return f"%{a}"
    if kind == "i":
        return str(a)
    if kind == "s":
        return f"@{a}"
    if kind == "L":
        return a
    raise IRError(kind)


def instr_text(ins: Instr) -> str:
    spec = OPERANDS[ins.base]
    if ins.base == "icall":
        code, args, sig = ins.args
        body = f"{ins.op} %{code}({', '.join('%' + a for a in args)}) sig{sig}"
    elif ins.base == "rtcall":
        name, args, meta = ins.args
        body = f"{ins.op} {name}({', '.join('%' + a for a in args)}) [{', '.join(map(str, meta))}]"
    elif ins.base == "switch":
        reg, cases, default = ins.args
        cs = ", ".join(f"{v}: {lab}" for v, lab in cases)
        body = f"switch %{reg} [{cs}] default {default}"
    else:
        ops = ", ".join(_operand_text(k, a) for k, a in zip(spec, ins.args))
        body = f"{ins.op} {ops}" if ops else ins.op
    return f"%{ins.dst} = {body}" if ins.dst is not None else body


def _param_text(p: Param) -> str:
    attr = f" {p.attr}" if p.attr else ""
    return f"{p.kind}{attr} %{p.reg}"


def module_text(m: Module) -> str:
    out = [m.descriptors.text()]
    for i, d in enumerate(m.data):
        out.append(f"data {i} = 0x{bytes(d).hex()}\n")
    for name, idx in m.fields:
        out.append(f"field {name} {idx}\n")
    for e in m.entries:
        line = f"entry {e.kind} {e.name} @{e.function}"
        if e.params:
            line += " (" + ", ".join(f"{n}: {d}" for n, d in e.params) + ")"
        if e.result is not None:
            line += f" -> {e.result}"
        out.append(line + "\n")
    for t in m.tables:
        ents = ", ".join(f"{i} -> @{f}" for i, f in t.entries)
        out.append(f"dispatch @{t.name} = [{ents}]\n")
    for f in m.functions:
        ps = ", ".join(_param_text(p) for p in f.params)
        out.append(f"define {f.kind} @{f.name}({ps}) -> {f.ret} {{\n")
        for b in f.blocks:
            out.append(f"{b.label}:\n")
            for ins in b.instrs:
                out.append(f"  {instr_text(ins)}\n")
        out.append("}\n")
    return "".join(out)


# --------------------------------------------------------------------------
# Parsing

_REG = r"%([^\s,()\[\]]+)"
_DEFINE_RE = re.compile(r"define (\w+) @(\S+)\((.*)\) -> (\S+) \{$")
_ENTRY_RE = re.compile(r"entry (\w+) (\S+) @(\S+)(?: \((.*)\))?(?: -> (\d+))?$")
_DISPATCH_RE = re.compile(r"dispatch @(\S+) = \[(.*)\]$")
_CALL_RE = re.compile(r"(\S+) " + _REG + r"\((.*?)\) sig(\(.*\) -> \S+)$")
_RTCALL_RE = re.compile(r"(\S+) (\w+)\((.*?)\) \[(.*)\]$")
_SWITCH_RE = re.compile(_REG + r" \[(.*)\] default (\S+)$")


def _regs(text):
    text = text.strip()
    if not text:
        return ()
    out = []
    for a in text.split(","):
        a = a.strip()
        if not a.startswith("%"):
            raise IRError(f"expected register, got {a!r}")
        out.append(a[1:])
    return tuple(out)


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def parse_instr(line: str) -> Instr:
    dst = None
    m = re.match(_REG + r" = (.*)$", line)
    if m:
        dst, line = m.group(1), m.group(2)
    op, _, rest = line.partition(" ")
    base = op.split(".", 1)[0]
    if base not in OPERANDS:
        raise IRError(f"unknown instruction {op!r}")
    if base == "icall":
        mm = _CALL_RE.match(line)
        if not mm:
            raise IRError(f"malformed icall: {line!r}")
        return Instr(mm.group(1), dst, (mm.group(2), _regs(mm.group(3)), mm.group(4)))
    if base == "rtcall":
        mm = _RTCALL_RE.match(line)
        if not mm:
            raise IRError(f"malformed rtcall: {line!r}")
        return Instr(mm.group(1), dst, (mm.group(2), _regs(mm.group(3)), _ints(mm.group(4))))
    if base == "switch":
        mm = _SWITCH_RE.match(rest)
        if not mm:
            raise IRError(f"malformed switch: {line!r}")
        cases = []
        for c in mm.group(2).split(","):
            if c.strip():
                v, lab = c.split(":")
                cases.append((int(v), lab.strip()))
        return Instr(op, None, (mm.group(1), tuple(cases), mm.group(3)))
    spec = OPERANDS[base]
    parts = [p.strip() for p in rest.split(",")] if rest.strip() else []
    if len(parts) != len(spec):
        raise IRError(f"{op} expects {len(spec)} operand(s): {line!r}")
    args = []
    for k, p in zip(spec, parts):
        if k == "r":
            if not p.startswith("%"):
                raise IRError(f"expected register in {line!r}")
            args.append(p[1:])
        elif k == "i":
            args.append(int(p))
        elif k == "s":
            if not p.startswith("@"):
                raise IRError(f"expected symbol in {line!r}")
            args.append(p[1:])
        else:
            args.append(p)
    return Instr(op, dst, tuple(args))


def _parse_param(text) -> Param:
    parts = text.split()
    if len(parts) == 2:
        return Param(parts[1][1:], parts[0])
    if len(parts) == 3:
        return Param(parts[2][1:], parts[0], parts[1])
    raise IRError(f"malformed parameter {text!r}")


def parse_module(text: str) -> Module:
    lines = text.splitlines()
    desc_lines = [ln for ln in lines if ln.startswith("tydescr ")]
    descriptors = parse_descriptor_lines(desc_lines) if desc_lines else DescriptorTable()
    data, fields, entries, tables, functions = {}, [], [], [], []
    i = 0
    while i < len(lines):
        ln = lines[i].rstrip()
        i += 1
        if not ln or ln.startswith("tydescr ") or ln.startswith(";"):
            continue
        if ln.startswith("data "):
            idx, _, hexs = ln[5:].partition(" = ")
            data[int(idx)] = bytes.fromhex(hexs[2:])
        elif ln.startswith("field "):
            _, name, idx = ln.split()
            fields.append((name, int(idx)))
        elif ln.startswith("entry "):
            m = _ENTRY_RE.match(ln)
            if not m:
                raise IRError(f"malformed entry line {ln!r}")
            params = ()
            if m.group(4):
                params = tuple((n.strip(), int(d)) for n, d in
                               (p.split(":") for p in m.group(4).split(",")))
            res = int(m.group(5)) if m.group(5) else None
            entries.append(EntryIR(m.group(1), m.group(2), m.group(3), params, res))
        elif ln.startswith("dispatch "):
            m = _DISPATCH_RE.match(ln)
            if not m:
                raise IRError(f"malformed dispatch line {ln!r}")
            ents = []
            for e in m.group(2).split(","):
                if e.strip():
                    idx, _, fn = e.partition("->")
                    ents.append((int(idx), fn.strip()[1:]))
            tables.append(TableIR(m.group(1), tuple(ents)))
        elif ln.startswith("define "):
            m = _DEFINE_RE.match(ln)
            if not m:
                raise IRError(f"malformed define line {ln!r}")
            params = [_parse_param(p.strip()) for p in m.group(3).split(",") if p.strip()]
            blocks = []
            while True:
                if i >= len(lines):
                    raise IRError(f"unterminated function {m.group(2)}")
                body = lines[i].strip()
                i += 1
                if body == "}":
                    break
                if body.endswith(":") and " " not in body:
                    blocks.append(Block(body[:-1]))
                elif body:
                    if not blocks:
                        raise IRError(f"instruction outside a block in {m.group(2)}")
                    blocks[-1].instrs.append(parse_instr(body))
            functions.append(Function(m.group(2), m.group(1), params, m.group(4), blocks))
        else:
            raise IRError(f"unrecognized line {ln!r}")
    if sorted(data) != list(range(len(data))):
        raise IRError("data indices are not contiguous")
    is_contract = any(e.kind != "main" for e in entries)
    return Module(descriptors, [data[k] for k in range(len(data))], tables, functions,
                  fields, entries, is_contract)


# --------------------------------------------------------------------------
# Verification

def _result_kind(ins: Instr, kinds) -> Optional[str]:
    b, s = ins.base, ins.suffix
    if b in ("const", "load") or b in ARITH:
        return "tag" if s == "tag" else s
    if b in ("lt", "eq", "newobj"):
        return "ref"
    if b in ("conststr", "mkpair"):
        return "pair"
    if b == "constbytes":
        return None          # size known from the data pool
    if b == "mov":
        return kinds.get(ins.args[0])
    if b in ("alloc", "alloca"):
        return "ptr"
    if b in ("fnaddr", "tabaddr", "dispatch"):
        return "u64"
    if b in ("fst", "snd"):
        return s or "u64"
    if b in ("icall", "rtcall"):
        return s
    return None


def _compatible(have, want):
    if have is None or want is None or have == want:
        return True
    ptrish = ("ptr", "ref", "u64")
    return have in ptrish and want in ptrish


def verify(m: Module) -> None:
    """Raise IRError on the first structural or typing violation."""
    nd = len(m.descriptors)
    fnames = {}
    for f in m.functions:
        if f.name in fnames:
            raise IRError(f"duplicate function @{f.name}")
        fnames[f.name] = f
    tnames = set()
    for t in m.tables:
        if t.name in tnames:
            raise IRError(f"duplicate dispatch table @{t.name}")
        tnames.add(t.name)
        for idx, fn in t.entries:
            if not 0 <= idx < nd:
                raise IRError(f"dispatch @{t.name}: bad descriptor index {idx}")
            if fn not in fnames or fnames[fn].kind != "thunk":
                raise IRError(f"dispatch @{t.name}: @{fn} is not a thunk")
    for e in m.entries:
        if e.function not in fnames:
            raise IRError(f"entry {e.name}: unknown function @{e.function}")
    kinds = {e.kind for e in m.entries}
    if m.is_contract and "init" not in kinds:
        raise IRError("contract module without an init entry")
    if not m.is_contract and "main" not in kinds:
        raise IRError("module without a main entry")
    for f in m.functions:
        _verify_function(f, m, fnames, tnames, nd)


def _verify_function(f: Function, m: Module, fnames, tnames, nd):
    where = f"@{f.name}"
    if not f.params or f.params[0].attr != "env":
        raise IRError(f"{where}: first parameter must be the environment")
    if not f.blocks:
        raise IRError(f"{where}: no blocks")
    labels = {b.label for b in f.blocks}
    if len(labels) != len(f.blocks):
        raise IRError(f"{where}: duplicate block label")
    kinds = {p.reg: ("ptr" if p.attr else p.kind) for p in f.params}
    sret = any(p.attr == "sret" for p in f.params)
    # definitions first (registers may be defined in any block)
    for b in f.blocks:
        for ins in b.instrs:
            if ins.dst is not None:
                k = _result_kind(ins, kinds)
                prev = kinds.get(ins.dst)
                if prev is not None and k is not None and not _compatible(prev, k):
                    raise IRError(f"{where}: register %{ins.dst} has kinds {prev} and {k}")
                kinds[ins.dst] = k if k is not None else prev
    for b in f.blocks:
        if not b.instrs or b.instrs[-1].base not in TERMINATORS:
            raise IRError(f"{where}/{b.label}: block does not end in a terminator")
        for j, ins in enumerate(b.instrs):
            base = ins.base
            ctx = f"{where}/{b.label}: {instr_text(ins)}"
            if base in TERMINATORS and j != len(b.instrs) - 1:
                raise IRError(f"{ctx}: terminator in the middle of a block")
            if (ins.dst is None) != (base in NO_DST or ins.suffix == "void"):
                raise IRError(f"{ctx}: wrong destination")

            def use(r):
                if r not in kinds:
                    raise IRError(f"{ctx}: undefined register %{r}")
                return kinds[r]

            if base == "icall":
                code, args, sig = ins.args
                use(code)
                want = sig[1:sig.index(")")].split(", ") if sig[1:sig.index(")")] else []
                if len(want) != len(args):
                    raise IRError(f"{ctx}: {len(args)} argument(s) for signature {sig}")
                for a, w in zip(args, want):
                    k = use(a)
                    w2 = "ptr" if w in ("env", "sret", "byref") else w
                    if not _compatible(k, w2):
                        raise IRError(f"{ctx}: argument %{a} of kind {k}, expected {w}")
                if sig.rsplit("-> ", 1)[1] != ins.suffix:
                    raise IRError(f"{ctx}: result kind disagrees with signature")
            elif base == "rtcall":
                name, args, meta = ins.args
                if name not in RUNTIME_CALLS:
                    raise IRError(f"{ctx}: unknown runtime call {name}")
                want = RUNTIME_CALLS[name]
                if want is not None and want != len(args):
                    raise IRError(f"{ctx}: {name} takes {want} argument(s)")
                for a in args:
                    use(a)
            elif base == "switch":
                reg, cases, default = ins.args
                use(reg)
                for _, lab in cases:
                    if lab not in labels:
                        raise IRError(f"{ctx}: unknown label {lab}")
                if default not in labels:
                    raise IRError(f"{ctx}: unknown label {default}")
            elif base == "br":
                if ins.args[0] not in labels:
                    raise IRError(f"{ctx}: unknown label {ins.args[0]}")
            elif base == "ret":
                if sret or f.ret == "void":
                    raise IRError(f"{ctx}: value return from a void function")
                if not _compatible(use(ins.args[0]), f.ret):
                    raise IRError(f"{ctx}: returns {kinds[ins.args[0]]}, expected {f.ret}")
            elif base == "retvoid":
                if f.ret != "void":
                    raise IRError(f"{ctx}: missing return value")
            elif base == "fnaddr":
                if ins.args[0] not in fnames:
                    raise IRError(f"{ctx}: unresolved function @{ins.args[0]}")
            elif base == "tabaddr":
                if ins.args[0] not in tnames:
                    raise IRError(f"{ctx}: unresolved dispatch table @{ins.args[0]}")
            elif base == "dispatch":
                use(ins.args[0])
                if not 0 <= ins.args[1] < nd:
                    raise IRError(f"{ctx}: bad descriptor index")
            elif base in ("conststr", "constbytes"):
                if not 0 <= ins.args[0] < len(m.data):
                    raise IRError(f"{ctx}: bad data index")
            elif base in ARITH or base in ("lt", "eq"):
                ka, kb = use(ins.args[0]), use(ins.args[1])
                if ins.suffix in INT_KINDS and not (ka == kb == ins.suffix):
                    raise IRError(f"{ctx}: operand kinds {ka}, {kb}")
            else:
                for k, a in zip(OPERANDS[base], ins.args):
                    if k == "r":
                        use(a)
