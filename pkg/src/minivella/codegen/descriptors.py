"""Type descriptors: runtime-readable type metadata, one entry per distinct
ground type, addressed by integer index."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from minivella.core import (
    ADTEnv, ADTType, ByStrType, ByStrXType, FunType, IntType, MapType, MessageType,
    StringType, TableType, is_ground, show_type,
)

MAX_DESCRIPTORS = 1 << 32


@dataclass(frozen=True)
class TypeDescriptor:
    kind: str                      # int string bystr bystrx adt map function message poly
    signed: bool = False
    width: int = 0
    size: int = 0
    name: str = ""
    targs: tuple = ()
    constructors: tuple = ()       # ((cname, tag, (field idx, ...)), ...)
    key: int = -1
    value: int = -1
    params: tuple = ()
    result: int = -1

    def constructor(self, cname):
        for c in self.constructors:
            if c[0] == cname:
                return c
        raise KeyError(cname)

    def text(self) -> str:
        k = self.kind
        if k == "int":
            return f"int {'i' if self.signed else 'u'}{self.width}"
        if k == "bystrx":
            return f"bystrx {self.size}"
        if k == "adt":
            ctors = " ".join(f"{c}#{tag}({','.join(map(str, fs))})" for c, tag, fs in self.constructors)
            return f"adt {self.name}({','.join(map(str, self.targs))}) {ctors}".rstrip()
        if k == "map":
            return f"map {self.key} {self.value}"
        if k == "function":
            return f"function ({','.join(map(str, self.params))}) -> {self.result}"
        return k


class DescriptorTable:
    """Interning table. ``types[i]`` is the SType described by ``descriptors[i]``."""

    def __init__(self, adts=None):
        self.adts = adts if isinstance(adts, ADTEnv) else ADTEnv(adts or ())
        self.descriptors: list = []
        self.types: list = []
        self._index: dict = {}

    def __len__(self):
        return len(self.descriptors)

    def __contains__(self, t):
        return t in self._index

    def index(self, t) -> int:
        """Index of an already-interned type."""
        return self._index[t]

    def intern(self, t) -> int:
        if t in self._index:
            return self._index[t]
        if not is_ground(t):
            raise ValueError(f"descriptor for non-ground type {show_type(t)}")
        if len(self.descriptors) >= MAX_DESCRIPTORS:
            raise OverflowError("descriptor table is full")
        i = len(self.descriptors)
        self._index[t] = i
        self.types.append(t)
        self.descriptors.append(None)
        self.descriptors[i] = self._describe(t)
        return i

    def _describe(self, t) -> TypeDescriptor:
        if isinstance(t, IntType):
            return TypeDescriptor("int", signed=t.signed, width=t.width)
        if isinstance(t, StringType):
            return TypeDescriptor("string")
        if isinstance(t, ByStrType):
            return TypeDescriptor("bystr")
        if isinstance(t, ByStrXType):
            return TypeDescriptor("bystrx", size=t.size)
        if isinstance(t, MessageType):
            return TypeDescriptor("message")
        if isinstance(t, TableType):
            return TypeDescriptor("poly")
        if isinstance(t, MapType):
            return TypeDescriptor("map", key=self.intern(t.key), value=self.intern(t.value))
        if isinstance(t, FunType):
            ps = tuple(self.intern(p) for p in t.params)
            return TypeDescriptor("function", params=ps, result=self.intern(t.result))
        if isinstance(t, ADTType):
            targs = tuple(self.intern(a) for a in t.args)
            decl = self.adts.decls[t.name]
            ctors = []
            for tag, (c, _) in enumerate(decl.constructors):
                fs = tuple(self.intern(ft) for ft in self.adts.field_types(c, t))
                ctors.append((c, tag, fs))
            return TypeDescriptor("adt", name=t.name, targs=targs, constructors=tuple(ctors))
        raise TypeError(f"no descriptor for {t!r}")

    def __getitem__(self, i) -> TypeDescriptor:
        return self.descriptors[i]

    def text(self) -> str:
        return "".join(f"tydescr {i} = {d.text()}\n" for i, d in enumerate(self.descriptors))


_DESC_RE = re.compile(r"tydescr (\d+) = (.*)$")
_CTOR_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)#(\d+)\(([\d,]*)\)")


def parse_descriptor_lines(lines) -> DescriptorTable:
    """Rebuild a table (descriptors and their STypes) from ``tydescr`` lines."""
    raw = {}
    for line in lines:
        m = _DESC_RE.match(line.strip())
        if not m:
            raise ValueError(f"bad descriptor line: {line!r}")
        raw[int(m.group(1))] = m.group(2).split(" ", 1)
    n = len(raw)
    if sorted(raw) != list(range(n)):
        raise ValueError("descriptor indices are not contiguous")

    def ints(s):
        return tuple(int(x) for x in s.split(",") if x)

    descs = []
    for i in range(n):
        parts = raw[i]
        kind, rest = parts[0], (parts[1] if len(parts) > 1 else "")
        if kind == "int":
            descs.append(TypeDescriptor("int", signed=rest[0] == "i", width=int(rest[1:])))
        elif kind in ("string", "bystr", "message", "poly"):
            descs.append(TypeDescriptor(kind))
        elif kind == "bystrx":
            descs.append(TypeDescriptor("bystrx", size=int(rest)))
        elif kind == "map":
            k, v = rest.split()
            descs.append(TypeDescriptor("map", key=int(k), value=int(v)))
        elif kind == "function":
            ps, r = rest.split(" -> ")
            descs.append(TypeDescriptor("function", params=ints(ps.strip("()")), result=int(r)))
        elif kind == "adt":
            head, _, ctor_text = rest.partition(" ")
            name, _, targs = head.partition("(")
            ctors = tuple((c, int(tag), ints(fs)) for c, tag, fs in _CTOR_RE.findall(ctor_text))
            descs.append(TypeDescriptor("adt", name=name, targs=ints(targs.rstrip(")")),
                                        constructors=ctors))
        else:
            raise ValueError(f"unknown descriptor kind {kind}")

    types = [None] * n

    def build(i, stack=()):
        if types[i] is not None:
            return types[i]
        d = descs[i]
        if d.kind == "int":
            t = IntType(d.signed, d.width)
        elif d.kind == "string":
            t = StringType()
        elif d.kind == "bystr":
            t = ByStrType()
        elif d.kind == "bystrx":
            t = ByStrXType(d.size)
        elif d.kind == "message":
            t = MessageType()
        elif d.kind == "poly":
            t = TableType()
        elif d.kind == "map":
            t = MapType(build(d.key), build(d.value))
        elif d.kind == "function":
            t = FunType(tuple(build(p) for p in d.params), build(d.result))
        else:
            t = ADTType(d.name, tuple(build(a) for a in d.targs))
        types[i] = t
        return t

    for i in range(n):
        build(i)

    # ADT declarations are implied by the descriptors; reconstruct an env so
    # the table can intern further types if asked to.
    from minivella.core import ADTDecl, BUILTIN_ADT_NAMES, TypeVar
    decls = {}
    for i, d in enumerate(descs):
        if d.kind == "adt" and d.name not in BUILTIN_ADT_NAMES and d.name not in decls:
            tparams = tuple(f"'T{k}" for k in range(len(d.targs)))
            concrete = {types[a]: TypeVar(p) for a, p in zip(d.targs, tparams)}
            ctors = tuple((c, tuple(concrete.get(types[f], types[f]) for f in fs))
                          for c, _, fs in d.constructors)
            decls[d.name] = ADTDecl(d.name, tparams, ctors)
    table = DescriptorTable(ADTEnv(decls.values()))
    table.descriptors = descs
    table.types = types
    table._index = {t: i for i, t in enumerate(types)}
    return table
