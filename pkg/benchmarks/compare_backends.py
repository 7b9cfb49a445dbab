"""Compare the compiled (Cython) and pure-Python VM backends on the
benchmark suite: median execution time of the same loaded image.

    python3 benchmarks/compare_backends.py [-n REPS] [suite_dir]
"""

import argparse
import sys

from minivella import bench, vm


def compare(suite_dir=None, repetitions=bench.MIN_REPETITIONS):
    rows = []
    for case in bench.load_suite(suite_dir or bench.default_suite_dir()):
        res = bench.backend_comparison(case, repetitions)
        outs = {r["output"] for r in res.values()}
        rows.append((case.name, res, len(outs) == 1))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("suite", nargs="?")
    ap.add_argument("-n", "--repetitions", type=int, default=bench.MIN_REPETITIONS)
    args = ap.parse_args(argv)
    names = sorted(vm.BACKENDS)
    print("program".ljust(12) + "".join(f"{n + ' (s)':>14}" for n in names)
          + ("   speedup" if "cython" in names else "") + "  agree")
    ok = True
    for name, res, agree in compare(args.suite, args.repetitions):
        line = name.ljust(12) + "".join(f"{res[n]['seconds']:>14.4f}" for n in names)
        if "cython" in res:
            line += f"{res['python']['seconds'] / res['cython']['seconds']:>9.1f}x"
        print(line + f"  {'yes' if agree else 'NO'}")
        ok &= agree
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
