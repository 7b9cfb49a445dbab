"""Per-stage dumps of a few programs, frozen as golden files. Regenerate
with MINIVELLA_UPDATE_GOLDEN=1 after an intended change."""

import os

import pytest

from helpers import CORPUS, GOLDEN
from minivella.passes.pipeline import STAGES, compile_source, dump

PROGRAMS = ["nested_patterns.mvexp", "poly_dual.mvexp", "c_counter.mv"]
STAGES_CHECKED = [s for s in STAGES if s != "typecheck"]   # typecheck prints like parse


@pytest.mark.parametrize("prog", PROGRAMS)
@pytest.mark.parametrize("stage", STAGES_CHECKED)
def test_golden_dump(prog, stage):
    with open(os.path.join(CORPUS, prog), encoding="utf-8") as fh:
        src = fh.read()
    text = dump(stage, compile_source(src, with_prelude=stage != "parse").forms[stage])
    path = os.path.join(GOLDEN, f"{os.path.splitext(prog)[0]}.{stage}.txt")
    if os.environ.get("MINIVELLA_UPDATE_GOLDEN"):
        os.makedirs(GOLDEN, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    with open(path, encoding="utf-8") as fh:
        assert text == fh.read()
