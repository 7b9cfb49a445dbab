"""Canonical data values exchanged between the runtime, the interpreter and
the VM's reification layer.

Integers are Python ints, ``String`` is ``str``, byte strings are ``bytes``.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ADTValue:
    constr: str
    args: tuple = ()


_INT_BIAS = 1 << 256


def canonical_key(v) -> bytes:
    """Injective byte encoding of a primitive map key; its byte order is the
    order in which map entries are serialized."""
    if isinstance(v, bool):
        raise TypeError("bool is not a key")
    if isinstance(v, int):
        return b"\x00" + (v + _INT_BIAS).to_bytes(33, "big")
    if isinstance(v, str):
        return b"\x01" + v.encode("utf-8")
    if isinstance(v, (bytes, bytearray)):
        return b"\x02" + bytes(v)
    raise TypeError(f"not a primitive key: {v!r}")


class MapValue:
    """Finite map with persistent (copy-on-update) semantics."""

    __slots__ = ("_d",)

    def __init__(self, entries=None):
        self._d = {}
        if entries:
            for k, v in entries:
                self._d[canonical_key(k)] = (k, v)

    @classmethod
    def _wrap(cls, d):
        m = cls.__new__(cls)
        m._d = d
        return m

    def put(self, k, v) -> "MapValue":
        d = dict(self._d)
        d[canonical_key(k)] = (k, v)
        return MapValue._wrap(d)

    def remove(self, k) -> "MapValue":
        ck = canonical_key(k)
        if ck not in self._d:
            return MapValue._wrap(dict(self._d))
        d = dict(self._d)
        del d[ck]
        return MapValue._wrap(d)

    def get(self, k, default=None):
        hit = self._d.get(canonical_key(k))
        return default if hit is None else hit[1]

    def contains(self, k) -> bool:
        return canonical_key(k) in self._d

    def __len__(self):
        return len(self._d)

    def sorted_items(self):
        return [self._d[ck] for ck in sorted(self._d)]

    def __eq__(self, other):
        return isinstance(other, MapValue) and self._d == other._d

    def __hash__(self):
        return hash(tuple(sorted(self._d)))

    def __repr__(self):
        return f"MapValue({self.sorted_items()!r})"


def canonical_field_order(fields):
    """Reserved (underscore) fields first, relative order otherwise kept."""
    return tuple([f for f in fields if f[0].startswith("_")]
                 + [f for f in fields if not f[0].startswith("_")])


@dataclass(frozen=True)
class MsgValue:
    """Message: ordered (name, SType, value) triples."""
    fields: tuple

    @classmethod
    def build(cls, fields) -> "MsgValue":
        return cls(canonical_field_order(tuple(fields)))
