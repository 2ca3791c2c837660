"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and problem size with the best-of-N wall time of
each available backend and the speed-up of the compiled one.
"""

import argparse
import timeit

import numpy as np

from dlsc.kernels import backends


def cases(rng):
    for n in (10, 50, 200):
        yield "hungarian", f"n={n}", (rng.normal(size=(n, n)),)
    for n in (10_000, 100_000):
        yield "contingency", f"n={n}", (rng.integers(0, 10, n), rng.integers(0, 10, n), 10, 10)
    for n, k in ((10_000, 10), (60_000, 10)):
        yield "lloyd_assign", f"n={n},k={k}", (rng.normal(size=(n, 16)), rng.normal(size=(k, 16)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    impls = backends()
    names = sorted(impls)
    print(f"{'kernel':<14}{'size':<16}" + "".join(f"{n:>12}" for n in names) + f"{'speed-up':>10}")
    for kernel, size, inputs in cases(np.random.default_rng(0)):
        times = {}
        for name in names:
            fn = getattr(impls[name], kernel)
            times[name] = min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat))
        cols = "".join(f"{times[n] * 1e3:>10.3f}ms" for n in names)
        ratio = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{kernel:<14}{size:<16}{cols}{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
