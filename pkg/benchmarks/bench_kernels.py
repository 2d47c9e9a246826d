"""Time the numba kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each workload runs once per backend to warm up (JIT compilation for
numba), then ``--repeat`` timed runs; the best time is reported.
"""

import argparse
import os
import time

from bbmlab import _accel
from bbmlab.engine import OffspringLaw, PruneConfig, advance, init_population
from bbmlab.kpp import Grid1D, kpp_solve
from bbmlab.stochastic import RandomStream

LAW = OffspringLaw.binary()


def engine_single(t=30.0, window=8.0):
    def run():
        s = RandomStream(1)
        pop = init_population(0.1, s)
        advance(pop, t, LAW, PruneConfig(window=window), s)
        return pop.size
    return run


def engine_paths(t=20.0, window=5.0):
    def run():
        s = RandomStream(2)
        pop = init_population(0.1, s, record_paths=True)
        advance(pop, t, LAW, PruneConfig(window=window), s)
        return pop.size
    return run


def kpp(T=40.0):
    grid = Grid1D(dx=0.05, dt=0.001)

    def run():
        return kpp_solve(LAW, T, grid, record_every=0.1).u.sum()
    return run


WORKLOADS = {
    "engine t=30 w=8": engine_single(),
    "engine + paths t=20 w=5": engine_paths(),
    "kpp T=40 dx=0.05": kpp(),
}


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'workload':<26}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, fn in WORKLOADS.items():
        res = {}
        for flag in ("1", "0"):
            os.environ[_accel.ENV_FLAG] = flag
            res[flag] = best_time(fn, args.repeat)
        print(f"{name:<26}{res['1']:>12.3f}{res['0']:>12.3f}{res['0'] / res['1']:>9.1f}x")
    os.environ.pop(_accel.ENV_FLAG, None)


if __name__ == "__main__":
    main()
