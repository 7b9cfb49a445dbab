"""Interpreter-versus-compiled benchmark harness.

Each suite program is compiled once (not timed); then the reference
interpreter and the VM each run it ``repetitions`` times and the median
wall-clock time of the execution alone is reported. Results must agree
byte-for-byte before a speedup is reported.
"""

from __future__ import annotations

import json
import os
import statistics
import time
from dataclasses import asdict, dataclass
from importlib import resources

from minivella import vm
from minivella.codegen import DescriptorTable
from minivella.interp import interpret, program_interface
from minivella.passes.pipeline import compile_source
from minivella.runtime.state import message_args, state_from_json

MIN_REPETITIONS = 5
SUFFIXES = (".mvexp", ".mv")


@dataclass
class BenchReport:
    program: str
    interpreter_s: float
    compiled_s: float
    speedup: float | None
    equal: bool
    interpreter_output: str = ""
    compiled_output: str = ""

    @property
    def status(self) -> str:
        return "ok" if self.equal else "FAILED"

    def to_json(self) -> dict:
        d = asdict(self)
        d["status"] = self.status
        return d

    @classmethod
    def from_json(cls, d: dict) -> "BenchReport":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


@dataclass
class BenchCase:
    name: str
    source: str
    state: dict | None = None       # JSON documents for contracts
    message: dict | None = None


def default_suite_dir() -> str:
    return str(resources.files("minivella").joinpath("benchmarks"))


def load_suite(suite_dir: str) -> list[BenchCase]:
    """Programs are ``*.mvexp`` and ``*.mv`` files; a contract ``x.mv``
    takes its input from ``x.state.json`` and ``x.message.json``."""
    cases = []
    for fn in sorted(os.listdir(suite_dir)):
        stem, ext = os.path.splitext(fn)
        if ext not in SUFFIXES:
            continue
        with open(os.path.join(suite_dir, fn), encoding="utf-8") as fh:
            case = BenchCase(stem, fh.read())
        if ext == ".mv":
            with open(os.path.join(suite_dir, stem + ".state.json"), encoding="utf-8") as fh:
                case.state = json.load(fh)
            with open(os.path.join(suite_dir, stem + ".message.json"), encoding="utf-8") as fh:
                case.message = json.load(fh)
        cases.append(case)
    return cases


def _median_time(fn, reps):
    times, out = [], None
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def bench_case(case: BenchCase, repetitions: int = MIN_REPETITIONS, *, backend=None,
               interp_repetitions: int | None = None, mutate_module=None) -> BenchReport:
    """Benchmark one program. ``mutate_module`` (testing hook) may rewrite
    the lowered module before it is loaded, e.g. to inject a fault."""
    comp = compile_source(case.source, name=case.name)
    typed, module = comp.typed, comp.module
    if mutate_module is not None:
        module = mutate_module(module)
    image = vm.load(module)
    be = vm.backend(backend)
    table = DescriptorTable(typed.adts)
    kw = {}
    if case.message is not None:
        info = program_interface(typed)
        kw["state"] = state_from_json(case.state, info.fields, table)
        kw["message"] = message_args(case.message, info.transitions, table)

    it, ires = _median_time(lambda: interpret(typed, **kw), interp_repetitions or repetitions)
    ct, cres = _median_time(lambda: vm.execute(image, be, **kw), repetitions)
    iout = ires.text(table)
    cout = cres.text(table)
    equal = iout == cout
    speedup = it / ct if equal and ct > 0 else None
    return BenchReport(case.name, it, ct, speedup, equal, iout, cout)


def run_suite(suite_dir: str | None = None, repetitions: int = MIN_REPETITIONS, *,
              backend=None, mutate_module=None) -> list[BenchReport]:
    cases = load_suite(suite_dir or default_suite_dir())
    return [bench_case(c, repetitions, backend=backend, mutate_module=mutate_module)
            for c in cases]


def report_json(reports, repetitions, backend_name) -> dict:
    return {"repetitions": repetitions, "backend": backend_name,
            "results": [r.to_json() for r in reports]}


def reports_from_json(doc: dict) -> list[BenchReport]:
    return [BenchReport.from_json(d) for d in doc["results"]]


def report_text(reports) -> str:
    rows = [("program", "interp (s)", "compiled (s)", "speedup", "status")]
    for r in reports:
        sp = f"{r.speedup:.1f}x" if r.speedup is not None else "-"
        rows.append((r.program, f"{r.interpreter_s:.4f}", f"{r.compiled_s:.4f}", sp, r.status))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
                     for row in rows) + "\n"


def backend_comparison(case: BenchCase, repetitions: int = MIN_REPETITIONS) -> dict:
    """Median execution time of the same image on every available VM
    backend (compiled extension versus pure-Python fallback)."""
    comp = compile_source(case.source, name=case.name)
    image = vm.load(comp.module)
    table = comp.module.descriptors
    kw = {}
    if case.message is not None:
        info = program_interface(comp.typed)
        kw["state"] = state_from_json(case.state, info.fields, table)
        kw["message"] = message_args(case.message, info.transitions, table)
    out = {}
    for name, be in sorted(vm.BACKENDS.items()):
        t, res = _median_time(lambda: vm.execute(image, be, **kw), repetitions)
        out[name] = {"seconds": t, "output": res.text(table)}
    return out
