"""minivella: a whole-program compiler and VM for a small System-F contract language."""

__version__ = "0.1.0"
