"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from kkdwave import _pure, kernels


def lms_case(n=50_000, taps=2):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((n, taps))
    d = -x @ np.linspace(1.0, -1.0, taps) + 0.1 * rng.standard_normal(n)
    step = 1e-3 / np.mean(np.sum(x * x, axis=1))

    def run(impl):
        # threshold 0 never stops, so both backends do exactly n updates
        impl.lms_calibrate(d, x, np.zeros(taps), step, 1000, 0.0, n)

    return run


def llr_case(trials=10_000, pairs=20):
    x = np.random.default_rng(1).standard_normal((trials, pairs, 2))
    m0 = np.array([1.3, 0.4, 0.9, 0.2])
    m1 = np.array([0.9, 0.4, 1.3, 0.2])
    return lambda impl: impl.batch_llr(x, m0, m1)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if kernels.compiled is None:
        raise SystemExit("compiled extension not available; build with `pip install --no-build-isolation -e .`")
    cases = {"lms_calibrate (50k samples, 2 taps)": lms_case(),
             "batch_llr (10k trials x 20 pairs)": llr_case()}
    print(f"{'kernel':40s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speed-up':>9s}")
    for name, run in cases.items():
        t_py = min(timeit.repeat(lambda: run(_pure), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: run(kernels.compiled), number=1, repeat=args.repeat))
        print(f"{name:40s} {1e3 * t_py:12.2f} {1e3 * t_cy:12.2f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
