"""Runtime support shared by the interpreter and the VM: checked integer
arithmetic, canonical values, JSON (de)serialization, contract state."""

from minivella.runtime.errors import (
    DeserializationError, DivByZero, InternalError, MVRuntimeError, Overflow,
    SerializationError, StackOverflow, StepLimitExceeded,
)
from minivella.runtime.serialize import deserialize_value, from_json, serialize_value, to_json
from minivella.runtime.state import ExecResult, Outputs, message_args, state_from_json, state_to_json
from minivella.runtime.values import ADTValue, MapValue, MsgValue, canonical_key
from minivella.runtime.wideint import arith, in_range, int_range

__all__ = [
    "ADTValue", "DeserializationError", "DivByZero", "ExecResult", "InternalError",
    "MVRuntimeError", "MapValue", "MsgValue", "Outputs", "Overflow", "SerializationError",
    "StackOverflow", "StepLimitExceeded", "arith", "canonical_key", "deserialize_value",
    "from_json", "in_range", "int_range", "message_args", "serialize_value", "state_from_json",
    "state_to_json", "to_json",
]
