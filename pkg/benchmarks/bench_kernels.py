"""Compiled versus numpy kernels: timing and bit-for-bit agreement.

    python3 benchmarks/bench_kernels.py [--rows 65536] [--repeat 5]
"""
import argparse
import math
import time

import numpy as np

from prwtail import kernels


def sup_inputs(rng, rows, cols):
    log_a = rng.normal(-1.0, math.sqrt(2.0), (rows, cols))
    log_b = -np.log1p(-rng.random((rows, cols)))
    return log_a, log_b


def run_sup(mod, log_a, log_b):
    n = log_a.shape[0]
    log_pi, log_m = np.zeros(n), np.full(n, -np.inf)
    steps = np.zeros(n, dtype=np.int64)
    done = mod.sup_advance(log_a, log_b, log_pi, log_m, steps, math.log(1e-6), 10_000)
    return log_m, log_pi, steps, done


def run_walk(mod, z):
    s = np.zeros(z.shape[0])
    pos, done = mod.walk_advance(z, s, 40.0)
    return pos, s, done


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def same(a, b):
    return all(np.array_equal(x, y, equal_nan=True) for x, y in zip(a, b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=1 << 16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    log_a, log_b = sup_inputs(rng, args.rows, 8)
    z = rng.normal(1.0, math.sqrt(2.0), (args.rows, 64))

    cases = [
        ("sup_advance", lambda m: run_sup(m, log_a, log_b)),
        ("walk_advance", lambda m: run_walk(m, z)),
    ]
    print(f"{'kernel':<14}{'cython ms':>12}{'numpy ms':>12}{'speedup':>10}  identical")
    for name, fn in cases:
        tc, oc = best_of(lambda: fn(kernels.compiled), args.repeat)
        tp, op = best_of(lambda: fn(kernels.fallback), args.repeat)
        print(f"{name:<14}{tc * 1e3:>12.2f}{tp * 1e3:>12.2f}{tp / tc:>10.1f}  {same(oc, op)}")


if __name__ == "__main__":
    main()
