"""Execution driver: contexts, entry points and result documents."""

from __future__ import annotations

from minivella.interp import DEFAULT_STACK_LIMIT, DEFAULT_STEP_LIMIT, call_deep
from minivella.runtime.errors import InternalError, MVRuntimeError
from minivella.runtime.state import ExecResult, Outputs
from minivella.vm import heap
from minivella.vm.bridge import Runtime
from minivella.vm.loader import Image, mem_size


class ExecContext:
    """Per-execution state: arena, runtime bridge, limits and counters.
    Never shared between executions."""

    def __init__(self, image: Image, backend, state=None, *, stack_limit=DEFAULT_STACK_LIMIT,
                 step_limit=DEFAULT_STEP_LIMIT, trace=False, debug=False):
        self.image = image
        self.backend = backend
        self.arena = backend.new_arena(image, trace=trace, debug=debug)
        self.runtime = Runtime(image, self.arena, state)
        self.stack_limit = stack_limit
        self.step_limit = step_limit
        self.steps = 0

    def call(self, name, args=()):
        """Call a function by name with canonical-convention register
        arguments (environment first)."""
        return self.backend.run(self, self.image.function_id(name), list(args))

    def call_entry(self, fname, params=(), args=()):
        """Run an entry function: null environment, by-reference slots for
        large arguments and an sret slot for a large result."""
        img = self.image
        fid = img.function_id(fname)
        f = img.module.function(fname)
        regs = [0]
        sret = None
        ps = f.params[1:]
        if ps and ps[0].attr == "sret":
            sret_kind = self._entry_result_kind(fname)
            sret = self.arena.alloc(mem_size(sret_kind), heap.ALLOCA)
            regs.append(sret)
            ps = ps[1:]
        rt = self.runtime
        for p, (_, idx), v in zip(ps, params, args):
            val = rt.materialize(idx, v)
            if p.attr == "byref":
                mk = rt.mem_kind(idx)
                slot = self.arena.alloc(mem_size(mk), heap.ALLOCA)
                self.arena.store(slot, mk, val)
                regs.append(slot)
            else:
                regs.append(val)
        r = self.backend.run(self, fid, regs)
        if sret is not None:
            return self.arena.load(sret, sret_kind)
        return r

    def _entry_result_kind(self, fname):
        e = next(e for e in self.image.module.entries if e.function == fname)
        return self.runtime.mem_kind(e.result)


def _guard(thunk):
    """Run ``thunk`` on the current thread. The dispatch loop keeps its own
    frame stack, so only value conversion of very deep data can exhaust
    host recursion; in that case the whole (fresh, deterministic) run is
    repeated on a big-stack thread."""
    try:
        return thunk(), None
    except MVRuntimeError as exc:
        return None, exc
    except RecursionError:
        pass
    try:
        return call_deep(thunk), None
    except MVRuntimeError as exc:
        return None, exc
    except RecursionError:
        return None, InternalError("host recursion limit reached")


def execute(image: Image, backend, *, init=False, state=None, message=None,
            stack_limit=DEFAULT_STACK_LIMIT, step_limit=DEFAULT_STEP_LIMIT,
            trace=False, debug=False, context_out=None) -> ExecResult:
    """Run an image. Same protocol as ``interp.interpret``: expression
    programs evaluate ``main``; contracts deploy (``init``) or run the
    transition ``message = (name, [canonical args])`` against ``state``."""
    m = image.module
    table = m.descriptors
    box = []

    def fresh():
        ctx = ExecContext(image, backend, state, stack_limit=stack_limit,
                          step_limit=step_limit, trace=trace, debug=debug)
        box[:] = [ctx]
        return ctx

    if not m.is_contract:
        e = m.entry("main")

        def go():
            ctx = fresh()
            return ctx.runtime.reify(e.result, ctx.call_entry(e.function))

        value, err = _guard(go)
        result = ExecResult.for_expr(table.types[e.result], value, err)
    else:
        fields = [(n, table.types[i]) for n, i in m.fields]
        if init:
            e = m.entry("init")
        else:
            tname, args = message
            e = m.entry("transition", tname)

        def go():
            ctx = fresh()
            if init:
                ctx.call_entry(e.function)
            else:
                ctx.call_entry(e.function, e.params, args)
            return ctx.runtime

        rt, err = _guard(go)
        if err is not None:
            # a failed deployment has no state; a failed transition keeps the old one
            result = ExecResult.for_contract(fields, None if init else dict(state), Outputs(), err)
        elif init:
            result = ExecResult.for_contract(fields, rt.state, Outputs(), None)
        else:
            result = ExecResult.for_contract(fields, rt.state, rt.outputs, None)
    if context_out is not None:
        context_out.extend(box)
    return result
