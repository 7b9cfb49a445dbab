"""Value layouts, type descriptors and lowering to the target IR."""

from minivella.codegen.descriptors import DescriptorTable, TypeDescriptor, parse_descriptor_lines
from minivella.codegen.ir import IRError, Module, module_text, parse_module, verify
from minivella.codegen.layout import LayoutDescriptor, constructor_layout, layout_of, value_kind
from minivella.codegen.lower import CodegenError, build_type_descriptors, lower

__all__ = [
    "CodegenError", "DescriptorTable", "IRError", "LayoutDescriptor", "Module", "TypeDescriptor",
    "build_type_descriptors", "constructor_layout", "layout_of", "lower", "module_text",
    "parse_descriptor_lines", "parse_module", "value_kind", "verify",
]
