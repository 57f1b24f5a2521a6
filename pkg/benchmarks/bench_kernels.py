"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Each kernel runs once before timing so JIT compilation is excluded; the
script also checks that both paths agree.
"""

import argparse
import time

import numpy as np

from sonarbg import _accel
from sonarbg.signals import WaveformSpec, generate_lfm


def best_of(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(rng):
    s = generate_lfm(WaveformSpec()).samples
    coeffs = rng.standard_normal(128)
    weights = np.zeros(128)
    weights[rng.choice(128, 12, replace=False)] = rng.random(12)
    pos = 40.0 + 0.999 * np.arange(512) + 0.37
    return {
        "convolve_truncated": (s, coeffs, 512),
        "lagged_gram": (s, s, 512, 128),
        "lagged_outer_sum": (s, weights, 512),
        "sinc_interp": (s, pos, 15, 8.6),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, a in cases(rng).items():
        f_np = getattr(_accel, name + "_numpy")
        f_nb = getattr(_accel, name + "_numba")
        diff = np.max(np.abs(f_np(*a) - f_nb(*a)))
        t_np = best_of(lambda: f_np(*a), args.repeat)
        t_nb = best_of(lambda: f_nb(*a), args.repeat)
        print(f"{name:<20s} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
