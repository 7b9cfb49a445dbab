"""Virtual machine for the target IR.

Two interchangeable backends implement the dispatch loop and arena: a
compiled Cython extension (``_cvm``) and a pure-Python fallback
(``_pyvm``). The compiled one is selected at import when it is available;
``MINIVELLA_VM=python`` forces the fallback.
"""

from __future__ import annotations

import os

from minivella.vm import _pyvm, heap
from minivella.vm.loader import Image, LoadError, load
from minivella.vm.machine import ExecContext, execute


class _Backend:
    def __init__(self, name, run, arena_cls):
        self.name = name
        self.run = run
        self._arena = arena_cls

    def new_arena(self, image, trace=False, debug=False):
        return self._arena(image.data, image.static_end, trace=trace, debug=debug)

    def __repr__(self):
        return f"<vm backend {self.name}>"


PYTHON = _Backend("python", _pyvm.run, heap.Arena)

try:
    from minivella.vm import _cvm
    CYTHON = _Backend("cython", _cvm.run, _cvm.CArena)
except ImportError:          # extension not built
    CYTHON = None

BACKENDS = {"python": PYTHON}
if CYTHON is not None:
    BACKENDS["cython"] = CYTHON

if os.environ.get("MINIVELLA_VM") == "python" or CYTHON is None:
    DEFAULT = PYTHON
else:
    DEFAULT = CYTHON


def backend(name=None) -> _Backend:
    if name is None:
        return DEFAULT
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable VM backend {name!r}") from None


def run_image(image: Image, *, backend_name=None, **kw):
    return execute(image, backend(backend_name), **kw)


__all__ = ["BACKENDS", "DEFAULT", "ExecContext", "Image", "LoadError", "backend", "execute",
           "load", "run_image"]
