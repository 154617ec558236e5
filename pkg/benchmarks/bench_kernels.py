"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--K 3 8 16] [--days 120]

Times single calls to ``rls_update`` and ``fuse_step`` for each entity
count, then a full backtest with each backend swapped in.
"""

import argparse
import timeit

import numpy as np

from mtload import BacktestConfig, _backend, run_backtest
from mtload.oracle import generate, make_ar_spec, random_spd


def _rls_case(K, rng):
    D = K + 1
    M = rng.standard_normal((K, D))
    Sigma = random_spd(K, rng)
    P = random_spd(D, rng)
    u = np.r_[1.0, rng.standard_normal(K)]
    s = rng.standard_normal(K)
    return M, Sigma, P, u, s


def bench_rls(rls, K, rng, number):
    M, Sigma, P, u, s = _rls_case(K, rng)

    def call():
        # work on copies so every call sees the same state
        rls(M.copy(), Sigma.copy(), P.copy(), 10.0, 0.9, u, s)

    return min(timeit.repeat(call, number=number, repeat=5)) / number


def bench_fuse(fuse, K, rng, number):
    A = rng.uniform(-0.3, 0.3, (K, K)) + 0.5 * np.eye(K)
    M_s = np.c_[rng.uniform(2, 6, K), A]
    Sigma_s = random_spd(K, rng)
    M_r = rng.standard_normal((K, 3 * K))
    Sigma_r = random_spd(K, rng)
    mean = rng.standard_normal(K)
    cov = random_spd(K, rng)
    u_r = rng.standard_normal(3 * K)

    def call():
        fuse(M_s, Sigma_s, M_r, Sigma_r, mean, cov, u_r)

    return min(timeit.repeat(call, number=number, repeat=5)) / number


def bench_backtest(name, panel):
    saved = _backend.rls_update, _backend.fuse_step
    _backend.rls_update, _backend.fuse_step = _backend.kernels(name)
    try:
        return min(timeit.repeat(lambda: run_backtest(panel, keep_forecasts=False), number=1, repeat=3))
    finally:
        _backend.rls_update, _backend.fuse_step = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, nargs="+", default=[1, 3, 8, 16])
    ap.add_argument("--days", type=int, default=120)
    ap.add_argument("--number", type=int, default=2000)
    args = ap.parse_args(argv)

    names = _backend.available()
    if names == ["python"]:
        print("compiled kernels not built; timing the fallback only")

    print(f"{'kernel':<10}{'K':>4}" + "".join(f"{n + ' (us)':>14}" for n in names) + f"{'speedup':>10}")
    for label, fn in (("rls", bench_rls), ("fuse", bench_fuse)):
        for K in args.K:
            times = []
            for n in names:
                kern = _backend.kernels(n)[0 if label == "rls" else 1]
                times.append(fn(kern, K, np.random.default_rng(K), args.number))
            speed = f"{times[-1] / times[0]:>9.1f}x" if len(times) == 2 else ""
            print(f"{label:<10}{K:>4}" + "".join(f"{t * 1e6:>14.2f}" for t in times) + speed)

    panel = generate(make_ar_spec(8, T=24 * args.days, noise=0.5, seed=0))
    times = [bench_backtest(n, panel) for n in names]
    speed = f" ({times[-1] / times[0]:.1f}x)" if len(times) == 2 else ""
    print(f"\nbacktest K=8, {args.days} days: " + ", ".join(f"{n} {t:.2f}s" for n, t in zip(names, times)) + speed)


if __name__ == "__main__":
    main()
