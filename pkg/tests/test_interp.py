import json

from helpers import interp_text
from minivella.frontend import load_program
from minivella.interp import interpret

ACK = """let ack = fix (ack : Uint64 -> Uint64 -> Uint64) => fun (m : Uint64) => fun (n : Uint64) =>
  let mz = builtin eq m (Uint64 0) in
  match mz with
  | True => builtin add n (Uint64 1)
  | False =>
    let m1 = builtin sub m (Uint64 1) in
    let nz = builtin eq n (Uint64 0) in
    match nz with
    | True => ack m1 (Uint64 1)
    | False =>
      let n1 = builtin sub n (Uint64 1) in
      let r = ack m n1 in
      ack m1 r
    end
  end
in ack (Uint64 3) (Uint64 N)"""


def run(src, **kw):
    return json.loads(interp_text(load_program(src)) if not kw else
                      interpret(load_program(src), **kw).text(None or _table(src)))


def _table(src):
    from minivella.codegen import DescriptorTable
    return DescriptorTable(load_program(src).adts)


def test_identity_application():
    assert run("(fun (x : Int32) => x) (Int32 5)") == {"result": "5"}


def test_ackermann_closed_form():
    for n in range(4):
        assert run(ACK.replace("N", str(n))) == {"result": str(2 ** (n + 3) - 3)}


def test_nested_patterns_applied():
    src = """let z = Int32 0 in
let f = fun (p : List (Option Int32)) =>
  match p with
  | Nil => z
  | Cons (Some x) xs => x
  | Cons _ _ => z
  end
in f (Cons {(Option Int32)} (Some {Int32} (Int32 9)) (Nil {(Option Int32)}))"""
    assert run(src) == {"result": "9"}


def test_limits():
    src = ACK.replace("N", "2")
    doc = run(src, stack_limit=3)
    assert doc["error"] == {"kind": "StackOverflow", "message": "call stack depth limit (3) exceeded"}
    doc = run(src, step_limit=10)
    assert doc["error"] == {"kind": "StepLimitExceeded", "message": "step limit (10) exceeded"}


def test_function_result_not_serializable():
    assert run("fun (x : Int32) => x") == {"error": {
        "kind": "SerializationError", "message": "function values are not serializable"}}


def test_contract_store_load_and_event_order():
    src = """contract C()
field f : Int32 = Int32 0
transition T()
  five = Int32 5;
  f := five;
  v <- f;
  e1 = {_eventname : "first"; x : v};
  event e1;
  e2 = {_eventname : "second"};
  event e2
end"""
    p = load_program(src)
    table = _table(src)
    res = interpret(p, state={"f": 0}, message=("T", []))
    doc = res.document(table)
    assert doc["state"]["fields"][0]["value"] == "5"
    assert [e["_eventname"] for e in doc["events"]] == ["first", "second"]
    assert doc["events"][0]["params"] == [{"vname": "x", "type": "Int32", "value": "5"}]
