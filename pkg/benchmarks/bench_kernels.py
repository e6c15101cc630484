"""Numba vs pure-numpy kernels.

    python3 benchmarks/bench_kernels.py [--trials 2000] [--repeat 3]

Each case runs once per backend to warm up (numba compiles on first call),
then reports the best of ``--repeat`` timings and checks the two backends
agree bit for bit.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from decusum.fusion import NetworkPolicy, simulate
from decusum.kernels import cusum_paths, decusum_paths
from decusum.models import DistributionPair

PAIR = DistributionPair(0.0, 0.4, 1.0)


def best_of(fn, repeat):
    out = fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(trials):
    def engine(algorithm, A, change_point, **kw):
        policy = NetworkPolicy.homogeneous(algorithm, 10, PAIR, A, **kw)

        def run(backend):
            b = simulate(policy, trials, seed=7, max_steps=100_000, change_point=change_point, backend=backend)
            return (b.stop, b.samples, b.ones)

        return run

    llr = np.random.default_rng(7).normal(-0.08, 0.4, size=(trials, 2000))

    yield "centralized-cusum FAR (A=5)", engine("centralized-cusum", 5.0, math.inf)
    yield "every-nth n=2 FAR (A=5)", engine("every-nth", 5.0, math.inf, n_stride=2)
    yield "all FAR (A=5)", engine("all", 5.0, math.inf)
    yield "fractional-all FAR (A=5)", engine("fractional-all", 5.0, math.inf, skip_prob=0.35)
    yield "de-all FAR (A=2)", engine("de-all", 2.0, math.inf, mu=0.2, h=20.0)
    yield "de-all delay (A=6.9)", engine("de-all", 6.9, 1, mu=0.2, h=20.0)
    yield "cusum_paths 2000 steps", lambda backend: (cusum_paths(llr, backend=backend),)
    yield "decusum_paths 2000 steps", lambda backend: decusum_paths(llr, 0.2, 20.0, backend=backend)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    print(f"{'case':32s} {'numba s':>9s} {'numpy s':>9s} {'speedup':>8s}  equal")
    for name, fn in cases(args.trials):
        t_nb, out_nb = best_of(lambda: fn("numba"), args.repeat)
        t_np, out_np = best_of(lambda: fn("numpy"), args.repeat)
        equal = all(np.array_equal(a, b) for a, b in zip(out_nb, out_np))
        print(f"{name:32s} {t_nb:9.4f} {t_np:9.4f} {t_np / t_nb:7.1f}x  {equal}")


if __name__ == "__main__":
    main()
