"""Contract state, incoming messages and execution output documents."""

from __future__ import annotations

from dataclasses import dataclass, field

from minivella.core import show_type
from minivella.runtime.errors import DeserializationError, MVRuntimeError, SerializationError
from minivella.runtime.serialize import dumps, from_json, message_to_json, to_json


def serializable_type(t) -> bool:
    from minivella.core import ADTType, MapType, is_primitive, MessageType
    if is_primitive(t) or isinstance(t, MessageType):
        return True
    if isinstance(t, ADTType):
        return all(serializable_type(a) for a in t.args)
    if isinstance(t, MapType):
        return serializable_type(t.value)
    return False


class StateStore:
    """Mutable field slots; the field set and types are fixed at creation."""

    def __init__(self, table, field_types, values):
        self.table = table
        self.field_types = dict(field_types)
        self.values = dict(values)

    def load(self, name):
        return self.values[name]

    def store(self, name, v):
        if name not in self.values:
            raise KeyError(f"unknown field {name}")
        self.values[name] = v

    def to_json(self):
        return state_to_json(self.values, self.field_types, self.table)


def state_from_json(obj, field_types, table) -> dict:
    if not isinstance(obj, dict) or not isinstance(obj.get("fields"), list):
        raise DeserializationError("state must be {\"fields\": [...]}")
    declared = dict(field_types)
    values = {}
    for i, ent in enumerate(obj["fields"]):
        path = f"$.fields[{i}]"
        if not isinstance(ent, dict) or not {"vname", "type", "value"} <= set(ent):
            raise DeserializationError("expected {vname, type, value}", path)
        name = ent["vname"]
        if name not in declared:
            raise DeserializationError(f"unknown field {name!r}", path)
        t = declared[name]
        if ent["type"] != show_type(t):
            raise DeserializationError(f"field {name} has type {show_type(t)}, "
                                       f"state says {ent['type']}", path)
        values[name] = from_json(table.intern(t), ent["value"], table, path + ".value")
    missing = [n for n in declared if n not in values]
    if missing:
        raise DeserializationError(f"missing field(s) {', '.join(missing)}")
    return {n: values[n] for n in declared}


def state_to_json(values, field_types, table) -> dict:
    return {"fields": [{"vname": n, "type": show_type(t),
                        "value": to_json(table.intern(t), values[n], table)}
                       for n, t in dict(field_types).items()]}


def message_args(obj, transitions, table):
    """Decode ``{"_tag": name, "params": [...]}`` against the transition
    signatures ``{name: ((param, SType), ...)}``; returns (name, [values])."""
    if not isinstance(obj, dict) or not isinstance(obj.get("_tag"), str):
        raise DeserializationError("message needs a string _tag")
    tag = obj["_tag"]
    if tag not in transitions:
        raise DeserializationError(f"no transition named {tag!r}", "$._tag")
    params = obj.get("params", [])
    given = {}
    for i, p in enumerate(params):
        if not isinstance(p, dict) or "vname" not in p or "value" not in p:
            raise DeserializationError("expected {vname, type, value}", f"$.params[{i}]")
        given[p["vname"]] = (i, p)
    args = []
    for name, t in transitions[tag]:
        if name not in given:
            raise DeserializationError(f"missing parameter {name!r}", "$.params")
        i, p = given[name]
        if "type" in p and p["type"] != show_type(t):
            raise DeserializationError(f"parameter {name} has type {show_type(t)}",
                                       f"$.params[{i}].type")
        args.append(from_json(table.intern(t), p["value"], table, f"$.params[{i}].value"))
    return tag, args


@dataclass
class Outputs:
    messages: list = field(default_factory=list)
    events: list = field(default_factory=list)


@dataclass
class ExecResult:
    """Outcome of one execution, in canonical values. ``document`` renders
    the output JSON shared by the interpreter and the VM."""
    is_contract: bool
    value: object = None
    type: object = None
    fields: tuple = ()
    state: dict = None
    outputs: Outputs = None
    error: MVRuntimeError = None

    @classmethod
    def for_expr(cls, t, value, error):
        return cls(False, value=value, type=t, error=error)

    @classmethod
    def for_contract(cls, fields, state, outputs, error):
        return cls(True, fields=tuple(fields), state=state, outputs=outputs, error=error)

    def document(self, table) -> dict:
        if not self.is_contract:
            if self.error is not None:
                return {"error": self.error.to_json()}
            if not serializable_type(self.type):
                return {"error": SerializationError("function values are not serializable").to_json()}
            return {"result": to_json(table.intern(self.type), self.value, table)}
        st = None if self.state is None else state_to_json(self.state, self.fields, table)
        return contract_output(st, self.outputs, self.error, table)

    def text(self, table) -> str:
        return dumps(self.document(table))


def expr_output(result_idx, value, error: MVRuntimeError | None, table) -> dict:
    if error is not None:
        return {"error": error.to_json()}
    return {"result": to_json(result_idx, value, table)}


def contract_output(state_json, outputs: Outputs, error, table) -> dict:
    out = {
        "state": state_json,
        "messages": [message_to_json(m, table) for m in outputs.messages],
        "events": [message_to_json(m, table) for m in outputs.events],
    }
    if error is not None:
        out["error"] = error.to_json()
        out["messages"] = []
        out["events"] = []
    return out


def render(doc: dict) -> str:
    return dumps(doc)
