import importlib.util
import os
import shutil

from helpers import CORPUS
from minivella import bench, vm

SCRIPT = os.path.join(os.path.dirname(os.path.dirname(__file__)), "benchmarks",
                      "compare_backends.py")


def load_script():
    spec = importlib.util.spec_from_file_location("compare_backends", SCRIPT)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_backend_comparison_agrees(tmp_path, capsys):
    shutil.copy(os.path.join(CORPUS, "ackermann_small.mvexp"), tmp_path / "ack.mvexp")
    res = bench.backend_comparison(bench.load_suite(str(tmp_path))[0], 5)
    assert set(res) == set(vm.BACKENDS)
    assert len({r["output"] for r in res.values()}) == 1
    assert load_script().main([str(tmp_path), "-n", "5"]) == 0
    out = capsys.readouterr().out
    assert "ack" in out and "yes" in out
