"""Value layouts.

References are 8 bytes. Integers are stored inline at their width,
strings and byte strings as (pointer, length) pairs, function values and
dispatch-table values as (code, environment) pairs. ADT values are boxed:
the heap object is a one-byte tag followed by the constructor's fields,
packed without padding.
"""

from __future__ import annotations

from dataclasses import dataclass

from minivella.core import (
    ADTEnv, ADTType, ByStrType, ByStrXType, FunType, IntType, MapType, MessageType, StringType,
    TableType, is_ground, show_type,
)

REF_SIZE = 8
PAIR_SIZE = 16
TAG_SIZE = 1
BYVAL_LIMIT = 16      # two eightbytes


@dataclass(frozen=True)
class LayoutDescriptor:
    boxed: bool
    size: int             # inline size in bytes
    align: int
    packing: str = "natural"


def layout_of(t) -> LayoutDescriptor:
    if not is_ground(t):
        raise ValueError(f"layout of non-ground type {show_type(t)}")
    if isinstance(t, IntType):
        n = t.width // 8
        return LayoutDescriptor(False, n, min(n, 8))
    if isinstance(t, (StringType, ByStrType)):
        return LayoutDescriptor(False, PAIR_SIZE, 8)
    if isinstance(t, ByStrXType):
        return LayoutDescriptor(False, t.size, 1)
    if isinstance(t, (FunType, TableType)):
        return LayoutDescriptor(False, PAIR_SIZE, 8)
    if isinstance(t, ADTType):
        return LayoutDescriptor(True, REF_SIZE, 8, "packed")
    if isinstance(t, (MapType, MessageType)):
        return LayoutDescriptor(True, REF_SIZE, 8)
    raise TypeError(f"no layout for {t!r}")


def value_kind(t) -> str:
    """Register/memory kind of a value of type ``t``."""
    if isinstance(t, IntType):
        return f"{'i' if t.signed else 'u'}{t.width}"
    if isinstance(t, (StringType, ByStrType, FunType, TableType)):
        return "pair"
    if isinstance(t, ByStrXType):
        return f"b{t.size}"
    if isinstance(t, (ADTType, MapType, MessageType)):
        return "ref"
    raise TypeError(f"no kind for {t!r}")


def kind_size(kind: str) -> int:
    if kind == "tag":
        return 1
    if kind in ("ref", "ptr"):
        return REF_SIZE
    if kind == "pair":
        return PAIR_SIZE
    if kind[0] == "b":
        return int(kind[1:])
    return int(kind[1:]) // 8


def by_reference(t) -> bool:
    return layout_of(t).size > BYVAL_LIMIT


@dataclass(frozen=True)
class ConstructorLayout:
    name: str
    tag: int
    fields: tuple          # ((offset, kind, SType), ...)
    size: int              # heap object size including the tag byte


def constructor_layout(adts: ADTEnv, cname: str, t: ADTType) -> ConstructorLayout:
    tag = adts.tag(cname)
    off = TAG_SIZE
    fields = []
    for ft in adts.field_types(cname, t):
        fields.append((off, value_kind(ft), ft))
        off += layout_of(ft).size
    return ConstructorLayout(cname, tag, tuple(fields), off)


def record_layout(types) -> tuple:
    """Packed offsets of an environment record: ((offset, kind), ...), size."""
    off = 0
    out = []
    for t in types:
        out.append((off, value_kind(t)))
        off += layout_of(t).size
    return tuple(out), off
