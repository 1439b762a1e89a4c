"""Time the compiled and pure-Python kernel backends on synthetic inputs.

    python3 benchmarks/bench_kernels.py --tests 5000000 --queries 1000000
"""

import argparse
import time

import numpy as np

from prevbounds import kernels


def make_inputs(n_tests, n_queries, n_persons, seed):
    rng = np.random.default_rng(seed)
    person = rng.integers(0, n_persons, n_tests)
    day = rng.integers(737500, 737800, n_tests)
    result = rng.integers(0, 3, n_tests).astype(np.int8)
    q_person = rng.integers(0, n_persons, n_queries)
    q_day = rng.integers(737500, 737800, n_queries)
    return person, day, result, q_person, q_day


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--tests", type=int, default=2_000_000)
    ap.add_argument("--queries", type=int, default=500_000)
    ap.add_argument("--persons", type=int, default=1_000_000)
    ap.add_argument("--units", type=int, default=16, help="units for assignment enumeration")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.backends()
    if len(backends) < 2:
        print("compiled backend unavailable; build it with `pip install -e . --no-build-isolation`")
    person, day, result, q_person, q_day = make_inputs(args.tests, args.queries, args.persons, args.seed)
    # sorted, collapsed inputs for the window and retest kernels
    p, d, v = kernels.collapse_max(person, day, result, impl=backends["python"])
    pos = v == 2
    sizes = [args.units // 2, args.units - args.units // 2]

    cases = {
        "collapse_max": lambda impl: kernels.collapse_max(person, day, result, impl=impl),
        "window_flags": lambda impl: kernels.window_flags(p, d, pos, q_person, q_day - 5, q_day + 1, impl=impl),
        "retest_starts": lambda impl: kernels.retest_starts(p, d, impl=impl),
        "assignment_counts": lambda impl: kernels.assignment_counts(sizes, impl=impl),
    }
    print(f"tests={args.tests} queries={args.queries} persons={args.persons} units={args.units}")
    print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")
    for name, case in cases.items():
        t = {b: best_of(lambda: case(impl), args.repeat) for b, impl in backends.items()}
        speed = f"{t['python'] / t['compiled']:>9.2f}x" if "compiled" in t else ""
        print(f"{name:<20}" + "".join(f"{t[b]:>11.3f}s" for b in backends) + speed)


if __name__ == "__main__":
    main()
