"""Runtime-library bridge: runtime calls issued by VM code, and conversion
between canonical values and their in-arena representation.

Conversions are driven purely by descriptor indices (the objects in the
arena carry nothing but their tag byte). Maps live outside the arena as
canonical ``MapValue``s addressed by handle; entries are reified on insert
and materialized on lookup.
"""

from __future__ import annotations

from dataclasses import dataclass

from minivella.runtime.errors import InternalError
from minivella.runtime.state import Outputs
from minivella.runtime.values import ADTValue, MapValue, MsgValue
from minivella.vm.heap import ADT, MAP, MSG, STR
from minivella.vm.loader import MK_BYTES, MK_PAIR, MK_REF, RT_NAMES, mem_kind, mem_size

_NONE = ADTValue("None")

# message encoding: 8-byte field count, then per field a 16-byte name pair,
# a 4-byte descriptor index and the value inline
MSG_HEADER = 8
MSG_NAME = 16
MSG_DESCR = 4


@dataclass(frozen=True)
class FunctionRef:
    """Stand-in for a function or dispatch-table value (code, env) that
    passes through a map or message; only meaningful within its arena."""
    pair: tuple


class Runtime:
    def __init__(self, image, arena, state=None):
        self.image = image
        self.arena = arena
        self.table = image.descriptors
        self.fields = [n for n, _ in image.module.fields]
        self.state = dict(state) if state is not None else {}
        self.outputs = Outputs()
        self.maps = [None]               # handle 0 is never issued
        self._mk = {}
        self._ctors = {}
        self.calls = [getattr(self, "rt_" + n) for n in RT_NAMES]

    # -- layouts from descriptors
    def mem_kind(self, idx) -> int:
        mk = self._mk.get(idx)
        if mk is None:
            d = self.table[idx]
            k = d.kind
            if k == "int":
                mk = mem_kind(f"{'i' if d.signed else 'u'}{d.width}")
            elif k in ("string", "bystr", "function", "poly"):
                mk = MK_PAIR
            elif k == "bystrx":
                mk = MK_BYTES + d.size
            else:
                mk = MK_REF
            self._mk[idx] = mk
        return mk

    def ctor_layout(self, idx):
        """{tag: (name, ((offset, mem kind, descriptor), ...), size)} plus name -> tag."""
        lay = self._ctors.get(idx)
        if lay is None:
            by_tag, by_name = {}, {}
            for name, tag, fs in self.table[idx].constructors:
                off, fields = 1, []
                for f in fs:
                    mk = self.mem_kind(f)
                    fields.append((off, mk, f))
                    off += mem_size(mk)
                by_tag[tag] = (name, tuple(fields), off)
                by_name[name] = tag
            lay = self._ctors[idx] = (by_tag, by_name)
        return lay

    # -- conversions
    def materialize(self, idx, v):
        d = self.table[idx]
        k = d.kind
        if k == "int":
            return v
        if k == "string":
            return self.new_bytes(v.encode("utf-8"))
        if k == "bystr":
            return self.new_bytes(bytes(v))
        if k == "bystrx":
            return bytes(v)
        if k == "adt":
            by_tag, by_name = self.ctor_layout(idx)
            tag = by_name[v.constr]
            _, fields, size = by_tag[tag]
            a = self.arena.alloc(size, ADT)
            self.arena.store(a, 0, tag)
            for (off, mk, f), x in zip(fields, v.args):
                self.arena.store(a + off, mk, self.materialize(f, x))
            return a
        if k == "map":
            return self.new_map(v)
        if k == "message":
            return self.encode_message(v)
        if isinstance(v, FunctionRef):
            return v.pair
        raise InternalError(f"cannot materialize a {k} value")

    def reify(self, idx, v):
        d = self.table[idx]
        k = d.kind
        if k == "int" or k == "bystrx":
            return v
        if k == "string":
            return self.arena.read(v[0], v[1]).decode("utf-8")
        if k == "bystr":
            return self.arena.read(v[0], v[1])
        if k == "adt":
            by_tag, _ = self.ctor_layout(idx)
            tag = self.arena.load(v, 0)
            entry = by_tag.get(tag)
            if entry is None:
                raise InternalError(f"bad constructor tag {tag} for {d.name}")
            name, fields, _ = entry
            return ADTValue(name, tuple(self.reify(f, self.arena.load(v + off, mk))
                                        for off, mk, f in fields))
        if k == "map":
            return self.maps[v]
        if k == "message":
            return self.decode_message(v)
        return FunctionRef(tuple(v))

    def new_bytes(self, raw: bytes):
        a = self.arena.alloc(len(raw), STR)
        self.arena.write(a, raw)
        return (a, len(raw))

    def new_map(self, m: MapValue) -> int:
        self.maps.append(m)
        self.arena.note(MAP)
        return len(self.maps) - 1

    def bool_obj(self, b) -> int:
        return self.arena.new_bool(b)

    # -- messages
    def encode_message(self, m: MsgValue) -> int:
        triples = []
        size = MSG_HEADER
        for name, t, v in m.fields:
            idx = self.table.intern(t)
            triples.append((name, idx, v))
            size += MSG_NAME + MSG_DESCR + mem_size(self.mem_kind(idx))
        a = self.arena.alloc(size, MSG)
        self._write_message(a, [(self.new_bytes(n.encode("utf-8")), i, self.materialize(i, v))
                                for n, i, v in triples])
        return a

    def _write_message(self, a, triples):
        ar = self.arena
        ar.store(a, 4, len(triples))                 # u64 count
        off = a + MSG_HEADER
        for name, idx, v in triples:
            ar.store(off, MK_PAIR, name)
            ar.store(off + MSG_NAME, 2, idx)         # u32 descriptor index
            mk = self.mem_kind(idx)
            ar.store(off + MSG_NAME + MSG_DESCR, mk, v)
            off += MSG_NAME + MSG_DESCR + mem_size(mk)

    def decode_message(self, a) -> MsgValue:
        ar = self.arena
        n = ar.load(a, 4)
        off = a + MSG_HEADER
        fields = []
        for _ in range(n):
            p = ar.load(off, MK_PAIR)
            name = ar.read(p[0], p[1]).decode("utf-8")
            idx = ar.load(off + MSG_NAME, 2)
            mk = self.mem_kind(idx)
            v = self.reify(idx, ar.load(off + MSG_NAME + MSG_DESCR, mk))
            fields.append((name, self.table.types[idx], v))
            off += MSG_NAME + MSG_DESCR + mem_size(mk)
        return MsgValue(tuple(fields))

    # -- runtime calls: rt_<name>(args, meta)
    def rt_concat(self, args, meta):
        ar = self.arena
        (a, n), (b, m) = args
        return self.new_bytes(ar.read(a, n) + ar.read(b, m))

    def rt_to_string(self, args, meta):
        return self.new_bytes(str(args[0]).encode("ascii"))

    def rt_to_bystr(self, args, meta):
        return self.new_bytes(bytes(args[0]))

    def _map(self, mi):
        d = self.table[mi]
        return d.key, d.value

    def rt_map_new(self, args, meta):
        return self.new_map(MapValue())

    def rt_map_put(self, args, meta):
        ki, vi = self._map(meta[0])
        m = self.maps[args[0]]
        return self.new_map(m.put(self.reify(ki, args[1]), self.reify(vi, args[2])))

    def rt_map_get(self, args, meta):
        ki, vi = self._map(meta[0])
        m, k = self.maps[args[0]], self.reify(ki, args[1])
        return self._option(meta[1], m, k)

    def _option(self, oi, m, k):
        if m.contains(k):
            return self.materialize(oi, ADTValue("Some", (m.get(k),)))
        return self.materialize(oi, _NONE)

    def rt_map_contains(self, args, meta):
        ki, _ = self._map(meta[0])
        return self.bool_obj(self.maps[args[0]].contains(self.reify(ki, args[1])))

    def rt_map_remove(self, args, meta):
        ki, _ = self._map(meta[0])
        return self.new_map(self.maps[args[0]].remove(self.reify(ki, args[1])))

    def rt_map_size(self, args, meta):
        return len(self.maps[args[0]])

    def rt_msg_build(self, args, meta):
        size = MSG_HEADER
        triples = []
        for j, v in enumerate(args):
            di, idx = meta[2 * j], meta[2 * j + 1]
            addr, raw = self.image.data[di]
            triples.append(((addr, len(raw)), idx, v))
            size += MSG_NAME + MSG_DESCR + mem_size(self.mem_kind(idx))
        a = self.arena.alloc(size, MSG)
        self._write_message(a, triples)
        return a

    def rt_state_load(self, args, meta):
        return self.materialize(meta[1], self.state[self.fields[meta[0]]])

    def rt_state_store(self, args, meta):
        self.state[self.fields[meta[0]]] = self.reify(meta[1], args[0])

    def rt_state_map_get(self, args, meta):
        ki, _ = self._map(meta[1])
        m = self.state[self.fields[meta[0]]]
        return self._option(meta[2], m, self.reify(ki, args[0]))

    def rt_state_map_exists(self, args, meta):
        ki, _ = self._map(meta[1])
        m = self.state[self.fields[meta[0]]]
        return self.bool_obj(m.contains(self.reify(ki, args[0])))

    def rt_state_map_put(self, args, meta):
        ki, vi = self._map(meta[1])
        f = self.fields[meta[0]]
        self.state[f] = self.state[f].put(self.reify(ki, args[0]), self.reify(vi, args[1]))

    def rt_state_map_delete(self, args, meta):
        ki, _ = self._map(meta[1])
        f = self.fields[meta[0]]
        self.state[f] = self.state[f].remove(self.reify(ki, args[0]))

    def rt_send(self, args, meta):
        self.outputs.messages.append(self.decode_message(args[0]))

    def rt_event(self, args, meta):
        self.outputs.events.append(self.decode_message(args[0]))
