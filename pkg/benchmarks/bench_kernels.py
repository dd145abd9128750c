"""Time the numba kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--samples N] [--steps K] [--repeat R]

Both backends are imported directly, so the EXTPOSE_DISABLE_NUMBA flag does
not matter here. The first numba call is made before timing so compilation
is excluded. Outputs are compared before anything is timed.
"""
import argparse
import time

import numpy as np

from extpose import lie
from extpose.kernels import _numpy

try:
    from extpose.kernels import _numba
except ImportError:  # numba not installed
    _numba = None


def scenario(n, k, seed=0):
    rng = np.random.default_rng(seed)
    Us = [lie.se23_exp(rng.normal(scale=0.05, size=9)) for _ in range(k)]
    Gs = [lie.se23_exp(rng.normal(scale=0.01, size=9)) for _ in range(k)]
    xi = rng.normal(scale=0.5, size=(n, 9))
    R, v, p = _numpy.se23_exp_batch(xi)
    return dict(
        xi=xi,
        phi=xi[:, :3].copy(),
        Rvp=(R, v, p),
        prop=(R, v, p,
              np.array([G.R for G in Gs]), np.array([G.v for G in Gs]), np.array([G.p for G in Gs]),
              np.array([U.R for U in Us]), np.array([U.v for U in Us]), np.array([U.p for U in Us]),
              np.full(k, 0.01), np.tile(np.eye(9) * 1e-3, (k, 1, 1)), rng.standard_normal((n, k, 9))),
        preint=(rng.normal(size=(k, 3)), rng.normal(size=(k, 3)), np.full(k, 0.01),
                rng.normal(scale=1e-2, size=(n, k, 6))),
    )


def cases(s):
    return {
        "so3_exp_batch": lambda m: m.so3_exp_batch(s["phi"]),
        "so3_log_batch": lambda m: m.so3_log_batch(s["Rvp"][0]),
        "se23_exp_batch": lambda m: m.se23_exp_batch(s["xi"]),
        "se23_log_batch": lambda m: m.se23_log_batch(*s["Rvp"]),
        "propagate_tangent_noise": lambda m: m.propagate_tangent_noise(*s["prop"]),
        "preintegrate_noisy": lambda m: m.preintegrate_noisy(*s["preint"]),
    }


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def max_diff(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return max(float(np.abs(x - y).max()) for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    s = scenario(args.samples, args.steps)
    print(f"{args.samples} samples, {args.steps} steps, best of {args.repeat}")
    print(f"{'kernel':26s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max diff':>9s}")
    for name, call in cases(s).items():
        t_np = best_time(lambda: call(_numpy), args.repeat)
        if _numba is None:
            print(f"{name:26s} {1e3 * t_np:11.2f} {'-':>11s}")
            continue
        diff = max_diff(call(_numpy), call(_numba))  # also triggers compilation
        t_nb = best_time(lambda: call(_numba), args.repeat)
        print(f"{name:26s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
