"""Interpreter versus compiled VM (every backend), byte for byte, over the
hand-written corpus and randomly generated well-typed programs."""

import pytest

from helpers import corpus_cases, run_everywhere
from progen import generate

CASES = corpus_cases()


@pytest.mark.parametrize("case", CASES, ids=[c.name for c in CASES])
def test_corpus(case):
    out = run_everywhere(case.source, case)
    assert out.vm, "no VM backend"
    for name, text in out.vm.items():
        assert text == out.interp, name


# disjoint from the seeds used by the acceptance suite
@pytest.mark.parametrize("seed", range(1000, 1250))
def test_random_program(seed):
    src = generate(seed)
    out = run_everywhere(src)
    for name, text in out.vm.items():
        assert text == out.interp, f"{name}\n{src}"


def test_random_programs_cover_outcomes():
    import json
    kinds = set()
    for seed in range(1000, 1250):
        doc = json.loads(run_everywhere(generate(seed)).interp)
        kinds.add(doc["error"]["kind"] if "error" in doc else "result")
    assert {"result", "Overflow"} <= kinds
