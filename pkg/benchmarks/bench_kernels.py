"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Also checks that both backends give the same numbers on the benchmark inputs.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from adventurer import _kernels_py

try:
    from adventurer import _kernels as compiled
except ImportError:
    compiled = None


def cases(rng):
    n = 4096
    r, v = rng.normal(size=n), rng.normal(size=n)
    d = rng.random(n) < 0.02
    scores = rng.random(200_000)
    p = rng.integers(0, 500, 20).astype(float)
    q = rng.integers(1, 500, 20).astype(float)
    return {
        "gae[n=4096]": lambda m: m.gae(r, v, d, 0.3, 0.99, 0.95),
        "histogram[n=200k,bins=20]": lambda m: m.histogram(scores, 20),
        "smoothed_kl[bins=20]": lambda m: m.smoothed_kl(p, q, 1e-6),
    }


def bench(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled kernels not built; only the fallback will be timed", file=sys.stderr)
    results = []
    for name, call in cases(np.random.default_rng(0)).items():
        py = bench(lambda: call(_kernels_py), args.repeat)
        row = {"kernel": name, "python_s": py}
        if compiled is not None:
            np.testing.assert_allclose(call(compiled), call(_kernels_py), rtol=1e-12)
            cy = bench(lambda: call(compiled), args.repeat)
            row.update(compiled_s=cy, speedup=py / cy)
        results.append(row)
    print(f"{'kernel':28s} {'python':>12s} {'compiled':>12s} {'speedup':>9s}")
    for row in results:
        cy = f"{row['compiled_s'] * 1e6:10.1f}us" if "compiled_s" in row else f"{'-':>12s}"
        sp = f"{row['speedup']:8.1f}x" if "speedup" in row else f"{'-':>9s}"
        print(f"{row['kernel']:28s} {row['python_s'] * 1e6:10.1f}us {cy} {sp}")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(results, f, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
