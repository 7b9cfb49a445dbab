"""Bump-allocated execution arena (pure-Python implementation).

Addresses are byte offsets into one growable buffer; address 0 is the null
reference and static data (string literals, message field names) sits at
fixed addresses from 8 upwards. Nothing is freed during an execution; the
arena is dropped wholesale afterwards.

Allocation instrumentation: per-category object counts and byte totals,
plus an optional ``trace`` of (category, size) in allocation order. With
``debug=True`` every load and store is checked to lie inside one object.
"""

from __future__ import annotations

from bisect import bisect_right

from minivella.codegen.ir import INT_KINDS
from minivella.runtime.errors import InternalError

ADT, ENV, STR, MAP, MSG, ALLOCA = range(6)
CATEGORIES = ("adt", "env", "str", "map", "msg", "alloca")

_INT_INFO = [None] + [(int(k[1:]) // 8, k[0] == "i") for k in INT_KINDS]


class Arena:
    def __init__(self, data=(), static_end=8, trace=False, debug=False, capacity=1 << 16):
        self.buf = bytearray(max(capacity, static_end * 2))
        self.top = static_end
        for addr, raw in data:
            self.buf[addr:addr + len(raw)] = raw
        self.counts = [0] * len(CATEGORIES)
        self.sizes = [0] * len(CATEGORIES)
        self.trace = [] if trace else None
        self.debug = debug
        # object extents for bounds checking; static items first
        self._starts = [a for a, _ in data]
        self._ends = [a + len(r) for a, r in data]

    # -- allocation
    def alloc(self, size, cat):
        a = self.top
        top = a + size
        if top > len(self.buf):
            self.buf.extend(bytes(max(top, 2 * len(self.buf)) - len(self.buf)))
        self.top = top
        self.counts[cat] += 1
        self.sizes[cat] += size
        if self.trace is not None:
            self.trace.append((CATEGORIES[cat], size))
        if self.debug:
            self._starts.append(a)
            self._ends.append(top)
        return a

    def note(self, cat, size=0):
        """Record an allocation that lives outside the arena (map handles)."""
        self.counts[cat] += 1
        self.sizes[cat] += size
        if self.trace is not None:
            self.trace.append((CATEGORIES[cat], size))

    def stats(self) -> dict:
        return {c: {"count": n, "bytes": s}
                for c, n, s in zip(CATEGORIES, self.counts, self.sizes)}

    # -- access
    def check(self, addr, n):
        i = bisect_right(self._starts, addr) - 1
        if addr <= 0 or i < 0 or addr + n > self._ends[i]:
            raise InternalError(f"out-of-bounds access of {n} byte(s) at address {addr}")

    def read(self, addr, n) -> bytes:
        if self.debug:
            self.check(addr, n)
        return bytes(self.buf[addr:addr + n])

    def write(self, addr, raw):
        if self.debug:
            self.check(addr, len(raw))
        self.buf[addr:addr + len(raw)] = raw

    def load(self, addr, mk):
        buf = self.buf
        if mk == 0:
            if self.debug:
                self.check(addr, 1)
            return buf[addr]
        if mk <= 8:
            n, signed = _INT_INFO[mk]
            if self.debug:
                self.check(addr, n)
            return int.from_bytes(buf[addr:addr + n], "little", signed=signed)
        if mk == 9:
            if self.debug:
                self.check(addr, 8)
            return int.from_bytes(buf[addr:addr + 8], "little")
        if mk == 10:
            if self.debug:
                self.check(addr, 16)
            return (int.from_bytes(buf[addr:addr + 8], "little"),
                    int.from_bytes(buf[addr + 8:addr + 16], "little"))
        n = mk - 16
        if self.debug:
            self.check(addr, n)
        return bytes(buf[addr:addr + n])

    def store(self, addr, mk, v):
        buf = self.buf
        if mk == 0:
            if self.debug:
                self.check(addr, 1)
            buf[addr] = v
        elif mk <= 8:
            n, signed = _INT_INFO[mk]
            if self.debug:
                self.check(addr, n)
            buf[addr:addr + n] = v.to_bytes(n, "little", signed=signed)
        elif mk == 9:
            if self.debug:
                self.check(addr, 8)
            buf[addr:addr + 8] = v.to_bytes(8, "little")
        elif mk == 10:
            if self.debug:
                self.check(addr, 16)
            buf[addr:addr + 8] = v[0].to_bytes(8, "little")
            buf[addr + 8:addr + 16] = v[1].to_bytes(8, "little")
        else:
            n = mk - 16
            if self.debug:
                self.check(addr, n)
            buf[addr:addr + n] = v

    def new_bool(self, b) -> int:
        a = self.alloc(1, ADT)
        self.buf[a] = 0 if b else 1
        return a
