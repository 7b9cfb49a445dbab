"""Command-line driver: ``minivella {check|compile|run|interp|bench}``.

Exit codes: 0 success, 1 compile-time error, 2 runtime error, 64 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from minivella import bench, vm
from minivella.codegen import DescriptorTable, IRError, module_text, parse_module, verify
from minivella.codegen.lower import CodegenError
from minivella.frontend import CompileError
from minivella.interp import DEFAULT_STACK_LIMIT, DEFAULT_STEP_LIMIT, interpret, program_interface
from minivella.passes.pipeline import STAGES, compile_source, dump
from minivella.runtime.errors import DeserializationError, MVRuntimeError
from minivella.runtime.state import message_args, render, state_from_json
from minivella.vm.loader import LoadError

EXIT_OK, EXIT_COMPILE, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _compile(path, until="lower"):
    name = os.path.splitext(os.path.basename(path))[0]
    return compile_source(_read(path), until=until, name=name)


def _report_compile_error(path, exc):
    if isinstance(exc, CompileError):
        for d in exc.diagnostics:
            print(d.format(path), file=sys.stderr)
    else:
        print(f"{path}:1:1: error: {exc}", file=sys.stderr)


def _emit(doc, out_path=None):
    text = render(doc)
    print(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _load_json(path):
    text = _read(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeserializationError(f"{path}: invalid JSON ({exc.msg})") from None


def _inputs(args, is_contract, fields, transitions, table):
    """Decode --state/--message into canonical interpret/execute kwargs."""
    if not is_contract:
        if args.init or args.state or args.message:
            raise UsageError("--init/--state/--message apply to contracts only")
        return {}
    if args.init:
        if args.state or args.message:
            raise UsageError("--init takes no state or message")
        return {"init": True}
    if not args.state or not args.message:
        raise UsageError("a contract needs --state and --message (or --init)")
    return {"state": state_from_json(_load_json(args.state), fields, table),
            "message": message_args(_load_json(args.message), transitions, table)}


# -- subcommands
def cmd_check(args) -> int:
    try:
        _compile(args.file, until="typecheck")
    except CompileError as exc:
        _report_compile_error(args.file, exc)
        return EXIT_COMPILE
    return EXIT_OK


def cmd_compile(args) -> int:
    until = "lower"
    try:
        comp = _compile(args.file, until)
    except (CompileError, CodegenError, IRError) as exc:
        _report_compile_error(args.file, exc)
        return EXIT_COMPILE
    if args.dump_after:
        sys.stdout.write(dump(args.dump_after, comp.forms[args.dump_after]))
    out = args.output or os.path.splitext(args.file)[0] + ".mvir"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(module_text(comp.module))
    return EXIT_OK


def _load_image(path):
    if path.endswith(".mvir"):
        m = parse_module(_read(path))
        verify(m)
        return vm.load(m)
    return vm.load(_compile(path).module)


def cmd_run(args) -> int:
    try:
        image = _load_image(args.file)
    except (CompileError, CodegenError, IRError, LoadError) as exc:
        _report_compile_error(args.file, exc)
        return EXIT_COMPILE
    m = image.module
    table = m.descriptors
    fields = [(n, table.types[i]) for n, i in m.fields]
    transitions = {e.name: tuple((p, table.types[i]) for p, i in e.params)
                   for e in m.entries if e.kind == "transition"}
    try:
        kw = _inputs(args, m.is_contract, fields, transitions, table)
    except DeserializationError as exc:
        _emit({"error": exc.to_json()}, args.output)
        return EXIT_RUNTIME
    res = vm.execute(image, vm.backend(args.backend), stack_limit=args.stack_limit,
                     step_limit=args.step_limit, **kw)
    _emit(res.document(table), args.output)
    return EXIT_RUNTIME if res.error is not None else EXIT_OK


def cmd_interp(args) -> int:
    try:
        comp = _compile(args.file, until="typecheck")
    except CompileError as exc:
        _report_compile_error(args.file, exc)
        return EXIT_COMPILE
    p = comp.typed
    info = program_interface(p)
    table = DescriptorTable(p.adts)
    try:
        kw = _inputs(args, info.is_contract, info.fields, info.transitions, table)
    except DeserializationError as exc:
        _emit({"error": exc.to_json()}, args.output)
        return EXIT_RUNTIME
    res = interpret(p, stack_limit=args.stack_limit, step_limit=args.step_limit, **kw)
    _emit(res.document(table), args.output)
    return EXIT_RUNTIME if res.error is not None else EXIT_OK


def cmd_bench(args) -> int:
    if args.repetitions < bench.MIN_REPETITIONS:
        raise UsageError(f"--repetitions must be at least {bench.MIN_REPETITIONS}")
    suite = args.suite or bench.default_suite_dir()
    if not os.path.isdir(suite):
        raise UsageError(f"no such suite directory: {suite}")
    be = vm.backend(args.backend)
    try:
        reports = bench.run_suite(suite, args.repetitions, backend=be.name)
    except CompileError as exc:
        _report_compile_error(suite, exc)
        return EXIT_COMPILE
    sys.stdout.write(bench.report_text(reports))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(bench.report_json(reports, args.repetitions, be.name), fh, indent=2)
            fh.write("\n")
    return EXIT_OK if all(r.equal for r in reports) else EXIT_RUNTIME


def _add_exec_flags(p):
    p.add_argument("--init", action="store_true", help="deploy: evaluate field initializers")
    p.add_argument("--state", help="contract state JSON file")
    p.add_argument("--message", help="incoming message JSON file")
    p.add_argument("--stack-limit", type=int, default=DEFAULT_STACK_LIMIT)
    p.add_argument("--step-limit", type=int, default=DEFAULT_STEP_LIMIT)
    p.add_argument("-o", "--output", help="also write the output JSON here")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="minivella", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="parse and typecheck")
    p.add_argument("file")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("compile", help="compile to a .mvir module")
    p.add_argument("file")
    p.add_argument("-o", "--output", help="output path (default: <file>.mvir)")
    p.add_argument("--dump-after", choices=STAGES, help="print the form after this stage")
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("run", help="compile (or load .mvir) and execute on the VM")
    p.add_argument("file")
    _add_exec_flags(p)
    p.add_argument("--backend", choices=sorted(vm.BACKENDS), default=None)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("interp", help="execute with the reference interpreter")
    p.add_argument("file")
    _add_exec_flags(p)
    p.set_defaults(fn=cmd_interp)

    p = sub.add_parser("bench", help="interpreter versus compiled timings")
    p.add_argument("suite", nargs="?", help="directory of programs (default: built-in suite)")
    p.add_argument("-n", "--repetitions", type=int, default=bench.MIN_REPETITIONS)
    p.add_argument("--backend", choices=sorted(vm.BACKENDS), default=None)
    p.add_argument("--json", help="write the report as JSON here")
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"minivella: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MVRuntimeError as exc:      # e.g. host recursion while compiling
        print(render({"error": exc.to_json()}))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
