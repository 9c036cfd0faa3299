"""Wall-clock comparison of the compiled and numpy DTW backends.

    python benchmarks/bench_dtw.py [--repeats 3]

Both backends are checked for identical cost and path on every shape before
timing is reported.
"""

import argparse
import time

import numpy as np

from sigver import dtw

SHAPES = [(100, 100), (300, 250), (600, 500), (1000, 900)]


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--channels", type=int, default=23)
    args = ap.parse_args()
    if dtw.BACKEND != "cython":
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(0)
    print(f"{'shape':>12} {'cython s':>10} {'numpy s':>10} {'speedup':>8}")
    for n, m in SHAPES:
        a = rng.normal(size=(n, args.channels))
        b = rng.normal(size=(m, args.channels))
        fast, slow = dtw.dtw(a, b, backend="cython"), dtw.dtw(a, b, backend="python")
        assert fast.cost == slow.cost and np.array_equal(fast.steps, slow.steps)
        t_c = best_of(lambda: dtw.dtw(a, b, backend="cython"), args.repeats)
        t_p = best_of(lambda: dtw.dtw(a, b, backend="python"), args.repeats)
        print(f"{n:>5}x{m:<6} {t_c:>10.4f} {t_p:>10.4f} {t_p / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
