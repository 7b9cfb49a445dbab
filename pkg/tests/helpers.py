"""Shared test utilities: corpus loading and engine runners."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from minivella import vm
from minivella.codegen import DescriptorTable
from minivella.interp import interpret, program_interface
from minivella.passes.pipeline import compile_source
from minivella.runtime.state import message_args, state_from_json

HERE = os.path.dirname(os.path.abspath(__file__))
CORPUS = os.path.join(HERE, "corpus")
GOLDEN = os.path.join(HERE, "golden")
BENCHMARKS = os.path.join(os.path.dirname(HERE), "src", "minivella", "benchmarks")


@dataclass
class Case:
    name: str
    path: str
    source: str
    is_contract: bool
    init: bool = False
    state: dict | None = None
    message: dict | None = None
    limits: dict = field(default_factory=dict)


def _json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_case(path) -> Case:
    stem, ext = os.path.splitext(path)
    with open(path, encoding="utf-8") as fh:
        c = Case(os.path.basename(stem), path, fh.read(), ext == ".mv")
    if os.path.exists(stem + ".limits.json"):
        c.limits = _json(stem + ".limits.json")
    if c.is_contract:
        if os.path.exists(stem + ".init"):
            c.init = True
        else:
            c.state = _json(stem + ".state.json")
            c.message = _json(stem + ".message.json")
    return c


def corpus_cases() -> list:
    return [load_case(os.path.join(CORPUS, f)) for f in sorted(os.listdir(CORPUS))
            if f.endswith((".mvexp", ".mv"))]


def inputs(case: Case, interface, table) -> dict:
    kw = dict(case.limits)
    if case.is_contract:
        if case.init:
            kw["init"] = True
        else:
            kw["state"] = state_from_json(case.state, interface.fields, table)
            kw["message"] = message_args(case.message, interface.transitions, table)
    return kw


@dataclass
class Outcome:
    interp: str
    vm: dict           # backend name -> output text
    compilation: object


def run_everywhere(source: str, case: Case | None = None) -> Outcome:
    comp = compile_source(source)
    table = comp.module.descriptors
    kw = inputs(case, program_interface(comp.typed), table) if case else {}
    ref = interpret(comp.typed, **kw).text(table)
    image = vm.load(comp.module)
    outs = {name: vm.execute(image, be, **kw).text(table)
            for name, be in sorted(vm.BACKENDS.items())}
    return Outcome(ref, outs, comp)


def interp_text(prog, case: Case | None = None, table=None) -> str:
    table = table or DescriptorTable(prog.adts)
    kw = inputs(case, program_interface(prog), table) if case else {}
    return interpret(prog, **kw).text(table)


class ArithProbe:
    """One compiled ``builtin op a b`` whose two operand constants are
    patched in the loaded image, so a single compilation checks many
    operand pairs on the VM."""

    A, B = 11, 13

    def __init__(self, op: str, signed: bool, width: int):
        t = f"{'Int' if signed else 'Uint'}{width}"
        comp = compile_source(f"let a = {t} {self.A} in let b = {t} {self.B} in builtin {op} a b")
        self.image = vm.load(comp.module)
        self.ia = self.image.consts.index(self.A)
        self.ib = self.image.consts.index(self.B)

    def run(self, a: int, b: int, backend):
        """Result value, or the runtime error."""
        self.image.consts[self.ia] = a
        self.image.consts[self.ib] = b
        res = vm.execute(self.image, backend)
        return res.error if res.error is not None else res.value
