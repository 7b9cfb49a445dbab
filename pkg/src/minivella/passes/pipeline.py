"""The fixed compilation pipeline, with per-stage dumps.

Stages run in order; ``compile_source`` can stop after any of them and
returns every intermediate form so callers (the CLI, tests) can dump or
interpret it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from minivella.codegen import build_type_descriptors, lower, module_text, verify
from minivella.core import show_program
from minivella.frontend import link, parse, prelude, typecheck
from minivella.passes.closure import closure_convert, show_closured
from minivella.passes.dce import eliminate_dead_code
from minivella.passes.flatten import flatten_matches
from minivella.passes.mono import monomorphize
from minivella.passes.uncurry import uncurry

STAGES = ("parse", "typecheck", "dce", "flatten", "uncurry", "mono", "closure", "lower")


@dataclass
class Compilation:
    forms: dict = field(default_factory=dict)       # stage -> program / module

    @property
    def typed(self):
        return self.forms["typecheck"]

    @property
    def module(self):
        return self.forms["lower"]

    def last(self):
        return self.forms[[s for s in STAGES if s in self.forms][-1]]


def dump(stage: str, form) -> str:
    if stage == "lower":
        return module_text(form)
    if stage == "closure":
        return show_closured(form)
    return show_program(form)


def compile_source(text: str, *, until: str = "lower", with_prelude: bool = True,
                   dump_dir: str | None = None, name: str = "program") -> Compilation:
    """Run the pipeline up to and including ``until``. Raises CompileError
    (frontend and pass errors) or CodegenError."""
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}; expected one of {', '.join(STAGES)}")
    if dump_dir is None:
        dump_dir = os.environ.get("MINIVELLA_DUMP_DIR") or None
    c = Compilation()
    user = parse(text)
    form = link(prelude(), user) if with_prelude else user
    steps = {
        "typecheck": typecheck,
        "dce": eliminate_dead_code,
        "flatten": flatten_matches,
        "uncurry": uncurry,
        "mono": monomorphize,
        "closure": closure_convert,
        "lower": _lower,
    }
    for stage in STAGES:
        if stage != "parse":
            form = steps[stage](form)
        c.forms[stage] = form
        if dump_dir:
            _write_dump(dump_dir, name, stage, form)
        if stage == until:
            break
    return c


def _lower(cp):
    m = lower(cp, build_type_descriptors(cp))
    verify(m)
    return m


def _write_dump(dump_dir, name, stage, form):
    os.makedirs(dump_dir, exist_ok=True)
    idx = STAGES.index(stage)
    with open(os.path.join(dump_dir, f"{name}.{idx}-{stage}.txt"), "w", encoding="utf-8") as fh:
        fh.write(dump(stage, form))
        fh.write("\n")
