"""Descriptor-driven JSON serialization of runtime values."""

from __future__ import annotations

import json
import re

from minivella.core import StringType, show_type
from minivella.runtime.errors import DeserializationError, SerializationError
from minivella.runtime.values import ADTValue, MapValue, MsgValue, canonical_key
from minivella.runtime.wideint import in_range, type_name

_INT_RE = re.compile(r"-?[0-9]+\Z")
_HEX_RE = re.compile(r"0x([0-9a-fA-F]*)\Z")


def to_json(idx: int, v, table):
    """Value of descriptor ``idx`` as a JSON-compatible Python object."""
    d = table[idx]
    k = d.kind
    if k == "int":
        return str(v)
    if k == "string":
        return v
    if k in ("bystr", "bystrx"):
        return "0x" + bytes(v).hex()
    if k == "adt":
        _, _, fields = d.constructor(v.constr)
        return {
            "constructor": v.constr,
            "argtypes": [show_type(table.types[a]) for a in d.targs],
            "arguments": [to_json(f, a, table) for f, a in zip(fields, v.args)],
        }
    if k == "map":
        return [{"key": to_json(d.key, kv, table), "val": to_json(d.value, vv, table)}
                for kv, vv in v.sorted_items()]
    if k == "message":
        return message_to_json(v, table)
    raise SerializationError("function values are not serializable")


def message_to_json(m: MsgValue, table) -> dict:
    out = {}
    params = []
    for name, t, val in m.fields:
        if name.startswith("_"):
            out[name] = val
        else:
            params.append({"vname": name, "type": show_type(t),
                           "value": to_json(table.intern(t), val, table)})
    out["params"] = params
    return out


def dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def serialize_value(idx: int, v, table) -> str:
    """Canonical JSON text; equal values give byte-identical output."""
    return dumps(to_json(idx, v, table))


def from_json(idx: int, obj, table, path: str = "$"):
    d = table[idx]
    k = d.kind
    if k == "int":
        if not isinstance(obj, str) or not _INT_RE.match(obj):
            raise DeserializationError("expected a decimal integer string", path)
        v = int(obj)
        if not in_range(v, d.signed, d.width):
            raise DeserializationError(f"{obj} out of range for {type_name(d.signed, d.width)}", path)
        return v
    if k == "string":
        if not isinstance(obj, str):
            raise DeserializationError("expected a string", path)
        return obj
    if k in ("bystr", "bystrx"):
        m = _HEX_RE.match(obj) if isinstance(obj, str) else None
        if m is None or len(m.group(1)) % 2:
            raise DeserializationError("expected a 0x-prefixed hex string", path)
        b = bytes.fromhex(m.group(1))
        if k == "bystrx" and len(b) != d.size:
            raise DeserializationError(f"expected {d.size} byte(s), got {len(b)}", path)
        return b
    if k == "adt":
        if not isinstance(obj, dict) or "constructor" not in obj:
            raise DeserializationError("expected an ADT object", path)
        c = obj["constructor"]
        try:
            _, _, fields = d.constructor(c)
        except KeyError:
            raise DeserializationError(f"unknown constructor {c!r} for {d.name}", path) from None
        argtypes = obj.get("argtypes", [])
        want = [show_type(table.types[a]) for a in d.targs]
        if argtypes != want:
            raise DeserializationError(f"argtypes {argtypes} do not match {want}", path)
        args = obj.get("arguments", [])
        if not isinstance(args, list) or len(args) != len(fields):
            raise DeserializationError(f"constructor {c} expects {len(fields)} argument(s)", path)
        return ADTValue(c, tuple(from_json(f, a, table, f"{path}.arguments[{i}]")
                                 for i, (f, a) in enumerate(zip(fields, args))))
    if k == "map":
        if not isinstance(obj, list):
            raise DeserializationError("expected a list of map entries", path)
        entries, seen = [], set()
        for i, ent in enumerate(obj):
            p = f"{path}[{i}]"
            if not isinstance(ent, dict) or set(ent) != {"key", "val"}:
                raise DeserializationError("expected {key, val}", p)
            kv = from_json(d.key, ent["key"], table, p + ".key")
            ck = canonical_key(kv)
            if ck in seen:
                raise DeserializationError("duplicate map key", p)
            seen.add(ck)
            entries.append((kv, from_json(d.value, ent["val"], table, p + ".val")))
        return MapValue(entries)
    if k == "message":
        return message_from_json(obj, table, path)
    raise DeserializationError(f"values of type {show_type(table.types[idx])} are not deserializable", path)


def message_from_json(obj, table, path="$") -> MsgValue:
    from minivella.frontend.parser import CompileError, parse_type
    if not isinstance(obj, dict):
        raise DeserializationError("expected a message object", path)
    fields = []
    for key, val in obj.items():
        if key == "params":
            continue
        if not key.startswith("_") or not isinstance(val, str):
            raise DeserializationError(f"bad reserved message field {key!r}", path)
        fields.append((key, StringType(), val))
    params = obj.get("params", [])
    if not isinstance(params, list):
        raise DeserializationError("params must be a list", path)
    for i, p in enumerate(params):
        pp = f"{path}.params[{i}]"
        if not isinstance(p, dict) or set(p) != {"vname", "type", "value"}:
            raise DeserializationError("expected {vname, type, value}", pp)
        try:
            t = parse_type(p["type"])
            idx = table.intern(t)
        except (CompileError, ValueError, KeyError):
            raise DeserializationError(f"bad type {p['type']!r}", pp) from None
        fields.append((p["vname"], t, from_json(idx, p["value"], table, pp + ".value")))
    return MsgValue.build(fields)


def deserialize_value(idx: int, text: str, table):
    """Inverse of serialize_value; raises DeserializationError with a JSON path."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeserializationError(f"invalid JSON: {exc.msg}") from None
    return from_json(idx, obj, table)
