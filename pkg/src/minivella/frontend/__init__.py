"""Parsing and typechecking. ``load_program`` links the standard prelude in
front of the user program (whole-program model) and typechecks the result."""

from __future__ import annotations

from importlib import resources

from minivella.core import Program
from minivella.frontend.parser import (
    CompileError, Diagnostic, parse, parse_expr, parse_type, tokenize,
)
from minivella.frontend.typecheck import typecheck, check_source

_PRELUDE = None


def prelude() -> Program:
    global _PRELUDE
    if _PRELUDE is None:
        text = resources.files("minivella.lib").joinpath("prelude.mvlib").read_text("utf-8")
        _PRELUDE = parse(text)
    return _PRELUDE


def link(*programs: Program) -> Program:
    """Concatenate libraries into one compilation unit; the last program
    supplies the main expression or contract."""
    adts, lib = [], []
    for p in programs:
        adts.extend(p.adts)
        lib.extend(p.lib)
    last = programs[-1]
    return Program(tuple(adts), tuple(lib), last.main, last.contract)


def load_program(text: str, with_prelude: bool = True) -> Program:
    """Parse, link and typecheck; raises CompileError."""
    user = parse(text)
    p = link(prelude(), user) if with_prelude else user
    return typecheck(p)


__all__ = [
    "CompileError", "Diagnostic", "check_source", "link", "load_program", "parse",
    "parse_expr", "parse_type", "prelude", "tokenize", "typecheck",
]
