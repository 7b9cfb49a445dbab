"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
(also collected into the terminal summary by conftest.py)."""

import json
import random
import time

from helpers import ArithProbe, BENCHMARKS, corpus_cases, run_everywhere
from minivella import bench, vm
from minivella.codegen import DescriptorTable, constructor_layout, layout_of
from minivella.core import ADTEnv, ADTType, BUILTIN_ADTS, ByStrXType, INT32
from minivella.passes import (
    arity_mismatches, non_flat_patterns, residual_type_variables, unbound_variables,
)
from minivella.passes.pipeline import compile_source
from minivella.core import show_type
from minivella.frontend import parse_type
from minivella.runtime import (
    ADTValue, DivByZero, MapValue, Overflow, arith, deserialize_value, int_range,
    serialize_value,
)

RESULTS = {}


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def suite_case(name):
    return next(c for c in bench.load_suite(BENCHMARKS) if c.name == name)


# 1 ------------------------------------------------------------------------
N_RANDOM = 200


def test_1_differential():
    from progen import generate
    t0 = time.perf_counter()
    cases = corpus_cases()
    mismatches = []
    for c in cases:
        out = run_everywhere(c.source, c)
        mismatches += [(c.name, be) for be, text in out.vm.items() if text != out.interp]
    for seed in range(N_RANDOM):
        out = run_everywhere(generate(seed))
        mismatches += [(f"random-{seed}", be) for be, text in out.vm.items() if text != out.interp]
    dt = time.perf_counter() - t0
    ok = len(cases) >= 30 and not mismatches and dt < 300
    report(1, ok, f"{len(cases)} corpus + {N_RANDOM} random programs on {sorted(vm.BACKENDS)}, "
                  f"{len(mismatches)} mismatches {mismatches[:5]}, {dt:.1f}s")


# 2 ------------------------------------------------------------------------
def test_2_ackermann():
    t0 = time.perf_counter()
    # a single interpreter run (about 15 s here) keeps the criterion under
    # its time budget; the VM side is the median of five
    r = bench.bench_case(suite_case("ackermann"), 5, interp_repetitions=1)
    dt = time.perf_counter() - t0
    want = 2 ** (7 + 3) - 3
    ok = (r.equal and r.compiled_output == f'{{"result":"{want}"}}'
          and r.speedup is not None and r.speedup >= 5 and dt < 30)
    report(2, ok, f"ackermann(3,7) -> {r.compiled_output} (want {want}); interp "
                  f"{r.interpreter_s:.2f}s, compiled {r.compiled_s:.3f}s, speedup "
                  f"{r.speedup or 0:.1f}x (floor 5x); {dt:.1f}s")


# 3 ------------------------------------------------------------------------
def test_3_church():
    t0 = time.perf_counter()
    case = suite_case("church")
    m = compile_source(case.source).module
    r = bench.bench_case(case, 5, interp_repetitions=3)
    dt = time.perf_counter() - t0
    ok = (r.equal and r.interpreter_output == '{"result":"131099"}' and len(m.tables) > 0
          and r.speedup is not None and r.speedup >= 5 and dt < 30)
    report(3, ok, f"church -> {r.compiled_output} on both paths, {len(m.tables)} dispatch "
                  f"tables; interp {r.interpreter_s:.2f}s, compiled {r.compiled_s:.3f}s, "
                  f"speedup {r.speedup or 0:.1f}x (floor 5x); {dt:.1f}s")


# 4 ------------------------------------------------------------------------
def test_4_simple_map():
    case = suite_case("simple_map")
    r = bench.bench_case(case, 201)
    doc = json.loads(r.compiled_output)
    # the output state document is valid input: run the transition again on it
    r2 = bench.bench_case(bench.BenchCase(case.name, case.source, doc["state"], case.message), 5)
    doc2 = json.loads(r2.compiled_output)
    m1 = doc["state"]["fields"][0]["value"]
    m2 = doc2["state"]["fields"][0]["value"]
    ok = (r.equal and r2.equal and m1 == [{"key": "k", "val": "2"}]
          and m2 == [{"key": "k", "val": "3"}] and doc["events"][0]["_eventname"] == "Incremented"
          and r.speedup is not None and r.speedup >= 1)
    report(4, ok, f"state out {m1} then {m2}, identical to interpreter; "
                  f"interp {r.interpreter_s * 1e3:.3f}ms, compiled {r.compiled_s * 1e3:.3f}ms, "
                  f"speedup {r.speedup or 0:.1f}x (floor 1x)")


# 5 ------------------------------------------------------------------------
def test_5_pass_invariants():
    sources = [c.source for c in corpus_cases()]
    sources += [c.source for c in bench.load_suite(BENCHMARKS)]
    counts = {"non-flat": 0, "arity": 0, "tyvars": 0, "free": 0}
    for src in sources:
        f = compile_source(src, until="closure").forms
        counts["non-flat"] += len(non_flat_patterns(f["flatten"]))
        counts["arity"] += len(arity_mismatches(f["uncurry"]))
        counts["tyvars"] += len(residual_type_variables(f["mono"]))
        counts["free"] += sum(len(unbound_variables(fd)) for fd in f["closure"].functions)
    report(5, sum(counts.values()) == 0, f"{len(sources)} programs, violations {counts}")


# 6 ------------------------------------------------------------------------
OPS = ("add", "sub", "mul", "div", "rem")
KINDS = [(s, w) for w in (32, 64, 128, 256) for s in (True, False)]


def oracle(op, signed, width, a, b):
    lo, hi = int_range(signed, width)
    if op in ("div", "rem") and b == 0:
        return DivByZero
    q = None
    if op in ("div", "rem"):
        q = abs(a) // abs(b) * (1 if (a < 0) == (b < 0) else -1)
    r = {"add": lambda: a + b, "sub": lambda: a - b, "mul": lambda: a * b,
         "div": lambda: q, "rem": lambda: a - b * q}[op]()
    return r if lo <= r <= hi else Overflow


def rand_operand(rng, signed, width):
    lo, hi = int_range(signed, width)
    k = rng.random()
    if k < 0.1:
        return rng.choice([lo, hi, 0, 1, lo + 1, hi - 1])
    if k < 0.4:
        return max(lo, min(hi, rng.randint(-100, 100)))
    return rng.randint(lo, hi) >> rng.randrange(width)


def outcome(fn):
    try:
        return fn()
    except (Overflow, DivByZero) as exc:
        return type(exc)


def boundary_cases():
    cases = []
    for signed, width in KINDS:
        lo, hi = int_range(signed, width)
        cases.append(("add", signed, width, hi, 1))       # max + 1
        cases.append(("sub", signed, width, lo, 1))       # min - 1 (unsigned underflow)
    return cases


def product_cases():
    # 2^width-sized products: 2^(w/2) * 2^(w/2) overflows every kind
    return [("mul", s, w, 1 << (w // 2), 1 << (w // 2)) for s, w in KINDS]


def test_6_arithmetic():
    rng = random.Random(6)
    bad = []
    pairs = 0
    probes = {}
    for op in OPS:
        for signed, width in KINDS:
            probe = probes[op, signed, width] = ArithProbe(op, signed, width)
            for i in range(1000):
                a, b = rand_operand(rng, signed, width), rand_operand(rng, signed, width)
                want = oracle(op, signed, width, a, b)
                got = outcome(lambda: arith(op, signed, width, a, b))
                if got != want:
                    bad.append(("runtime", op, signed, width, a, b, got))
                if i % 10 == 0:        # every tenth pair also through each VM backend
                    for name, be in vm.BACKENDS.items():
                        r = probe.run(a, b, be)
                        got = type(r) if isinstance(r, Exception) else r
                        if got != want:
                            bad.append((name, op, signed, width, a, b, got))
                pairs += 1
    edge = boundary_cases()
    for op, signed, width, a, b in edge + product_cases():
        if outcome(lambda: arith(op, signed, width, a, b)) is not Overflow:
            bad.append(("boundary", op, signed, width, a, b))
        for name, be in vm.BACKENDS.items():
            probe = probes[op, signed, width]
            if not isinstance(probe.run(a, b, be), Overflow):
                bad.append((name, "boundary", op, signed, width, a, b))
    report(6, not bad and len(edge) == 16,
           f"{pairs} random pairs (5 ops x 8 kinds x 1000) plus {len(edge)} boundary and "
           f"{len(product_cases())} product overflows; mismatches {len(bad)} {bad[:3]}")


# 7 ------------------------------------------------------------------------
PRIMS = ["Int32", "Uint32", "Int64", "Uint64", "Int128", "Uint128", "Int256", "Uint256",
         "String", "ByStr20", "ByStr32", "ByStr"]
KEYS = ["Int32", "Uint128", "Int256", "String", "ByStr20"]


def rand_type(rng, depth=2):
    k = rng.random()
    if depth == 0 or k < 0.4:
        return rng.choice(PRIMS + ["Bool"])
    if k < 0.55:
        return f"Option ({rand_type(rng, depth - 1)})"
    if k < 0.7:
        return f"List ({rand_type(rng, depth - 1)})"
    if k < 0.85:
        return f"Pair ({rand_type(rng, depth - 1)}) ({rand_type(rng, depth - 1)})"
    return f"Map {rng.choice(KEYS)} ({rand_type(rng, depth - 1)})"


def rand_value(rng, t):
    name = type(t).__name__
    if name == "IntType":
        lo, hi = int_range(t.signed, t.width)
        return rng.choice([lo, hi, 0, rng.randint(lo, hi), rng.randint(-9, 9) if t.signed else 7])
    if name == "StringType":
        return "".join(rng.choice("abé\"\\ {}") for _ in range(rng.randrange(5)))
    if name == "ByStrXType":
        return bytes(rng.randrange(256) for _ in range(t.size))
    if name == "ByStrType":
        return bytes(rng.randrange(256) for _ in range(rng.randrange(5)))
    if name == "MapType":
        return MapValue([(rand_value(rng, t.key), rand_value(rng, t.value))
                         for _ in range(rng.randrange(5))])
    if t.name == "Bool":
        return ADTValue(rng.choice(["True", "False"]))
    if t.name == "Option":
        return ADTValue("None") if rng.random() < 0.3 else ADTValue("Some", (rand_value(rng, t.args[0]),))
    if t.name == "Pair":
        return ADTValue("Pair", (rand_value(rng, t.args[0]), rand_value(rng, t.args[1])))
    v = ADTValue("Nil")
    for _ in range(rng.randrange(4)):
        v = ADTValue("Cons", (rand_value(rng, t.args[0]), v))
    return v


def natural_key(k):
    """Expected entry order, independent of the runtime's key encoding:
    integers numerically, strings by UTF-8 bytes, byte strings bytewise."""
    return k.encode("utf-8") if isinstance(k, str) else k


def map_orders_ok(idx, table, obj):
    """Every serialized map lists its entries in the expected key order."""
    d = table[idx]
    if d.kind == "map":
        keys = [deserialize_value(d.key, json.dumps(e["key"]), table) for e in obj]
        return (keys == sorted(keys, key=natural_key)
                and all(map_orders_ok(d.value, table, e["val"]) for e in obj))
    if d.kind == "adt":
        _, _, fs = d.constructor(obj["constructor"])
        return all(map_orders_ok(f, table, o) for f, o in zip(fs, obj["arguments"]))
    return True


def test_7_serialization():
    rng = random.Random(7)
    table = DescriptorTable(BUILTIN_ADTS)
    failures = []
    for i in range(500):
        t = parse_type(rand_type(rng))
        idx = table.intern(t)
        v = rand_value(rng, t)
        s = serialize_value(idx, v, table)
        back = deserialize_value(idx, s, table)
        s2 = serialize_value(idx, back, table)
        obj = json.loads(s)
        if back != v or s2 != s or not map_orders_ok(idx, table, obj):
            failures.append((show_type(t), s))
        # insertion order never affects the bytes
        if type(t).__name__ == "MapType":
            items = v.sorted_items()
            rng.shuffle(items)
            if serialize_value(idx, MapValue(items), table) != s:
                failures.append(("order", show_type(t)))
    report(7, not failures, f"500 random typed values: round trip, canonical map order, "
                            f"byte-identical re-serialization; failures {failures[:3]}")


# 8 ------------------------------------------------------------------------
def test_8_layouts():
    env = ADTEnv(BUILTIN_ADTS)
    cons_i32 = constructor_layout(env, "Cons", ADTType("List", (INT32,))).size
    cons_b20 = constructor_layout(env, "Cons", ADTType("List", (ByStrXType(20),))).size
    b20 = layout_of(ByStrXType(20))
    img = vm.load(compile_source("""let a = Cons {Int32} (Int32 1) (Nil {Int32}) in
let b = Cons {ByStr20} (ByStr20 0x00000000000000000000000000000000000000ff) (Nil {ByStr20}) in
Pair {(List Int32) (List ByStr20)} a b""").module)
    seen = {}
    for name, be in sorted(vm.BACKENDS.items()):
        ctxs = []
        vm.execute(img, be, trace=True, context_out=ctxs)
        seen[name] = sorted({s for c, s in ctxs[0].arena.trace if c == "adt"})
    ok = (cons_i32 == 13 and b20.size == 20 and not b20.boxed and cons_b20 == 1 + 20 + 8
          and all({13, 29} <= set(s) for s in seen.values()))
    report(8, ok, f"layout_of: Cons Int32 {cons_i32}B, ByStr20 inline {b20.size}B "
                  f"(Cons ByStr20 {cons_b20}B); traced ADT allocations {seen}")

