"""Whole-program compilation passes, in pipeline order: dead code
elimination, pattern flattening, uncurrying, monomorphization and closure
conversion. Each pass has a checker for the invariant it establishes."""

from minivella.passes.closure import ClosuredProgram, closure_convert, unbound_variables
from minivella.passes.dce import eliminate_dead_code
from minivella.passes.flatten import flatten_matches, non_flat_patterns
from minivella.passes.mono import monomorphize, residual_type_variables
from minivella.passes.uncurry import arity_mismatches, uncurry

__all__ = [
    "ClosuredProgram", "arity_mismatches", "closure_convert", "eliminate_dead_code",
    "flatten_matches", "monomorphize", "non_flat_patterns", "residual_type_variables",
    "unbound_variables", "uncurry",
]
