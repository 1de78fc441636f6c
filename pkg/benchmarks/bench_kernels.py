"""Head-to-head timing of the compiled and pure-Python kernel backends.

Both implementations are imported directly (bypassing the import-time
selection in ``degf.kernels``) and driven on identical inputs, so the
numbers compare exactly the same work. Outputs are also cross-checked
bit for bit on every case before timing starts.

Usage:
    python benchmarks/bench_kernels.py [--sizes 16,64,256,1024,4096]
                                       [--repeats 200] [--seed 0]
"""

from __future__ import annotations

import argparse
import math
import statistics
import sys
import time

import numpy as np

from degf import _kernels_py
from degf.metrics import render_table

try:
    from degf import _kernels
except ImportError:
    _kernels = None


def _cases(sizes, seed):
    """One (logits, masked, p, q) tuple per size, deterministic in seed."""
    rng = np.random.default_rng(seed)
    out = []
    for n in sizes:
        logits = rng.normal(scale=4.0, size=n)
        masked = (rng.random(n) < 0.125).astype(np.uint8)
        masked[int(rng.integers(n))] = 0  # keep at least one entry live
        p = rng.dirichlet(np.ones(n))
        q = rng.dirichlet(np.ones(n))
        out.append((n, logits, masked, p, q))
    return out


def _check_agreement(cases):
    """Every kernel must produce bit-identical results on both backends."""
    for n, logits, masked, p, q in cases:
        a = np.empty(n)
        b = np.empty(n)
        _kernels.softmax(logits, masked, 1.0, a)
        _kernels_py.softmax(logits, masked, 1.0, b)
        if not (a == b).all():
            raise AssertionError(f"softmax outputs differ at n={n}")
        for fn in ("kl_div", "js_div"):
            x = getattr(_kernels, fn)(p, q)
            y = getattr(_kernels_py, fn)(p, q)
            if not (x == y or (math.isnan(x) and math.isnan(y))):
                raise AssertionError(f"{fn} differs at n={n}: {x} vs {y}")


def _time(fn, repeats):
    """Median of ``repeats`` single-call timings, in microseconds."""
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e6)
    return statistics.median(samples)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="16,64,256,1024,4096")
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",") if s]

    if _kernels is None:
        print("compiled backend not importable in this build; "
              "only the pure-Python numbers below are available")
    cases = _cases(sizes, args.seed)
    if _kernels is not None:
        _check_agreement(cases)
        print("agreement check: all kernels bit-identical across backends\n")

    rows = []
    for n, logits, masked, p, q in cases:
        out = np.empty(n)
        per_kernel = {
            "softmax": lambda impl: impl.softmax(logits, masked, 1.0, out),
            "kl_div": lambda impl: impl.kl_div(p, q),
            "js_div": lambda impl: impl.js_div(p, q),
        }
        for name, call in per_kernel.items():
            py_us = _time(lambda: call(_kernels_py), args.repeats)
            row = {"kernel": name, "n": n, "python_us": py_us}
            if _kernels is not None:
                c_us = _time(lambda: call(_kernels), args.repeats)
                row["compiled_us"] = c_us
                row["speedup"] = py_us / c_us if c_us > 0 else float("inf")
            rows.append(row)

    columns = ["kernel", "n", "python_us"]
    if _kernels is not None:
        columns += ["compiled_us", "speedup"]
    print(render_table(rows, columns))
    return 0


if __name__ == "__main__":
    sys.exit(main())
