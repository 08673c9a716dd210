"""Compare the compiled (numba) and pure-numpy kernel implementations.

Run with:  python benchmarks/bench_kernels.py
Set PSMSYNTH_NO_NUMBA=1 before launching to check that the fallback alone
still completes (the compiled column then repeats the numpy path).
"""

import time

import numpy as np

from psmsynth import dse, kernels


def timeit(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - started)
    return best


def bench_masks(rows):
    rng = np.random.default_rng(0)
    for n in (1_000, 10_000, 100_000):
        xs = rng.random(n)
        ys = rng.random(n)
        order = np.lexsort((ys, xs))
        impls = kernels.IMPLEMENTATIONS["pareto_mask"]
        impls["compiled"](xs, ys, order)  # warm up the JIT cache
        rows.append(
            (
                f"pareto_mask n={n}",
                timeit(impls["compiled"], xs, ys, order),
                timeit(impls["numpy"], xs, ys, order),
            )
        )


def bench_combos(rows):
    space = dse.synthetic_space()  # 4 groups x 32 alternatives = 1,048,576 configs
    args = (space.offsets, space.sizes, space.f_req, space.f_max, space.power, space.area)
    for chunk in (4_096, 65_536, space.total):
        impls = kernels.IMPLEMENTATIONS["evaluate_combos"]
        impls["compiled"](0, 1, *args)  # warm up the JIT cache

        def run(fn):
            for start in range(0, space.total, chunk):
                fn(start, min(chunk, space.total - start), *args)

        rows.append(
            (
                f"evaluate_combos chunk={chunk}",
                timeit(lambda: run(impls["compiled"]), repeats=3),
                timeit(lambda: run(impls["numpy"]), repeats=3),
            )
        )


def main():
    print(f"numba available: {kernels.HAVE_NUMBA}")
    rows = []
    bench_masks(rows)
    bench_combos(rows)
    print(f"{'kernel':<32} {'compiled (s)':>14} {'numpy (s)':>12} {'speedup':>9}")
    for name, jit, pure in rows:
        speedup = pure / jit if jit > 0 else float("inf")
        print(f"{name:<32} {jit:>14.6f} {pure:>12.6f} {speedup:>8.1f}x")


if __name__ == "__main__":
    main()
