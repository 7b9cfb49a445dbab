import json
import os
import shutil
import subprocess
import sys

import pytest

from helpers import CORPUS
from minivella import bench
from minivella.cli import main
from minivella.codegen import module_text, parse_module
from minivella.frontend import parse
from minivella.passes import non_flat_patterns

GOOD = "let x = Int32 20 in builtin add x (Int32 22)\n"


@pytest.fixture
def src(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def corpus(name):
    return os.path.join(CORPUS, name)


def test_check_ok_and_error(src, capsys):
    assert main(["check", src("a.mvexp", GOOD)]) == 0
    bad = src("b.mvexp", "let x = in x\n")
    assert main(["check", bad]) == 1
    assert capsys.readouterr().err.strip() == f"{bad}:1:9: error: expected an expression (found 'in')"


def test_run_and_interp(src, capsys):
    f = src("a.mvexp", GOOD)
    assert main(["run", f]) == 0
    assert capsys.readouterr().out.strip() == '{"result":"42"}'
    assert main(["interp", f]) == 0
    assert capsys.readouterr().out.strip() == '{"result":"42"}'
    for be in ("python", "cython"):
        assert main(["run", f, "--backend", be]) == 0
        assert capsys.readouterr().out.strip() == '{"result":"42"}'


def test_runtime_error_exit_2(capsys):
    assert main(["run", corpus("div_by_zero.mvexp")]) == 2
    doc = json.loads(capsys.readouterr().out)
    assert doc["error"]["kind"] == "DivByZero"
    assert main(["run", corpus("ackermann_small.mvexp"), "--stack-limit", "2"]) == 2
    assert json.loads(capsys.readouterr().out)["error"]["kind"] == "StackOverflow"


def test_contract_run(tmp_path, capsys):
    out = tmp_path / "out.json"
    argv = [corpus("c_counter.mv"), "--state", corpus("c_counter.state.json"),
            "--message", corpus("c_counter.message.json"), "-o", str(out)]
    assert main(["run"] + argv) == 0
    vm_text = capsys.readouterr().out
    assert main(["interp"] + argv) == 0
    assert capsys.readouterr().out == vm_text
    assert out.read_text() == vm_text
    assert "state" in json.loads(vm_text)


def test_contract_bad_state_exit_2(src, capsys):
    bad = src("s.json", '{"fields": [{"vname": "count", "type": "Uint128", "value": 7}]}')
    rc = main(["run", corpus("c_counter.mv"), "--state", bad,
               "--message", corpus("c_counter.message.json")])
    assert rc == 2
    assert json.loads(capsys.readouterr().out)["error"]["kind"] == "DeserializationError"


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["run"],
    ["run", "nonexistent.mvexp"],
    ["bench", "-n", "3"],
    ["compile", "x.mvexp", "--dump-after", "nosuchstage"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as ei:
        rc = main(argv)
        raise SystemExit(rc)
    assert ei.value.code == 64


def test_contract_needs_inputs(capsys):
    assert main(["run", corpus("c_counter.mv")]) == 64
    assert main(["interp", corpus("c_counter.mv"), "--init", "--state", "x"]) == 64
    assert main(["run", corpus("list_ops.mvexp"), "--init"]) == 64


def test_compile_is_deterministic_and_runnable(src, tmp_path, capsys):
    f = src("a.mvexp", open(corpus("poly_dual.mvexp")).read())
    a, b = str(tmp_path / "a1.mvir"), str(tmp_path / "a2.mvir")
    assert main(["compile", f, "-o", a]) == 0
    assert main(["compile", f, "-o", b]) == 0
    assert open(a).read() == open(b).read()
    assert main(["compile", f]) == 0
    assert os.path.exists(str(tmp_path / "a.mvir"))
    capsys.readouterr()
    assert main(["run", a]) == 0
    from_ir = capsys.readouterr().out
    assert main(["interp", f]) == 0
    assert capsys.readouterr().out == from_ir


def test_run_rejects_broken_ir(src, capsys):
    bad = src("x.mvir", "define fun @f(ptr env %.env) -> void {\nbb0:\n}\n")
    assert main(["run", bad]) == 1
    assert "error:" in capsys.readouterr().err


def test_dump_after_flatten_is_flat(src, capsys):
    f = src("a.mvexp", open(corpus("nested_patterns.mvexp")).read())
    assert main(["compile", f, "--dump-after", "flatten", "-o", f + ".mvir"]) == 0
    text = capsys.readouterr().out
    assert non_flat_patterns(parse(text)) == []
    assert main(["compile", f, "--dump-after", "typecheck", "-o", f + ".mvir"]) == 0
    assert non_flat_patterns(parse(capsys.readouterr().out))


def test_dump_dir_environment(src, tmp_path, monkeypatch):
    d = tmp_path / "dumps"
    d.mkdir()
    monkeypatch.setenv("MINIVELLA_DUMP_DIR", str(d))
    assert main(["compile", src("p.mvexp", GOOD)]) == 0
    names = sorted(os.listdir(d))
    assert names[0] == "p.0-parse.txt" and names[-1] == "p.7-lower.txt"
    assert len(names) == 8


@pytest.fixture
def tiny_suite(tmp_path):
    d = tmp_path / "suite"
    d.mkdir()
    shutil.copy(corpus("poly_dual.mvexp"), d / "poly_dual.mvexp")
    for ext in (".mv", ".state.json", ".message.json"):
        shutil.copy(corpus("c_simple_map" + ext), d / ("c_simple_map" + ext))
    return str(d)


def test_bench_json_round_trip(tiny_suite, tmp_path, capsys):
    out = tmp_path / "bench.json"
    assert main(["bench", tiny_suite, "-n", "5", "--json", str(out)]) == 0
    text = capsys.readouterr().out
    assert "poly_dual" in text and "c_simple_map" in text
    doc = json.loads(out.read_text())
    assert doc["repetitions"] == 5
    reports = bench.reports_from_json(doc)
    assert [r.program for r in reports] == ["c_simple_map", "poly_dual"]
    assert all(r.status == "ok" and r.speedup > 0 for r in reports)
    assert bench.report_json(reports, 5, doc["backend"]) == doc


def test_bench_flags_disagreement(tiny_suite):
    def corrupt(m):
        text = module_text(m)
        bad = text.replace("const.i32 40", "const.i32 41")
        assert bad != text
        return parse_module(bad)

    case = next(c for c in bench.load_suite(tiny_suite) if c.name == "poly_dual")
    r = bench.bench_case(case, 5, mutate_module=corrupt)
    assert not r.equal and r.status == "FAILED" and r.speedup is None
    assert "FAILED" in bench.report_text([r])


def test_console_script():
    exe = shutil.which("minivella")
    assert exe is not None
    p = subprocess.run([exe, "run", corpus("strings.mvexp")], capture_output=True, text=True)
    assert p.returncode == 0
    p = subprocess.run([sys.executable, "-m", "minivella.cli", "check", corpus("strings.mvexp")])
    assert p.returncode == 0


def test_check_type_error(src, capsys):
    f = src("t.mvexp", "let x = Int32 1 in builtin add x (Uint32 2)\n")
    assert main(["check", f]) == 1
    assert ":1:20: error: type mismatch" in capsys.readouterr().err


def test_compile_recursive_adt_program(src, tmp_path):
    f = src("l.mvexp", """type MyList = | MyNil | MyCons of Int32 MyList
let xs = MyCons (Int32 7) MyNil in xs
""")
    out = str(tmp_path / "l.mvir")
    assert main(["compile", f, "-o", out]) == 0
    (line,) = [ln for ln in open(out) if "adt MyList" in ln]
    assert "MyNil#0()" in line and "MyCons#1(" in line


def test_missing_state_file_is_usage_error(capsys):
    rc = main(["run", corpus("c_counter.mv"), "--state", "/nonexistent/state.json",
               "--message", corpus("c_counter.message.json")])
    assert rc == 64
