"""Compare the numpy and numba implementations of the two hot loops.

    python3 benchmarks/bench_backends.py [--n 400 1600] [--repeat 5]

Times bandwidth bisection over all rows and one loss+gradient evaluation,
checks that both backends agree, and prints one line per (loop, n).
"""
import argparse
import math
import time

import numpy as np

from gtsne import _numba_kernels as nb
from gtsne import _numpy_kernels as npk
from gtsne.calibrate import pairwise_dtheta
from gtsne.hot import plogp
from gtsne.kernels import cauchy_kernel, power_kernel


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, nargs="+", default=[400, 1600])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--rho", type=float, default=0.3)
    args = ap.parse_args()

    kin, kout = power_kernel(), cauchy_kernel()
    print(f"{'loop':<14}{'n':>6}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>9}{'max rel diff':>14}")
    for n in args.n:
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(n, 2))
        dth = pairwise_dtheta(X, kin.theta)
        wts = np.full((n, n), 1.0 / n)
        np.fill_diagonal(wts, 0.0)
        lo, hi = np.full(n, 1e-3), np.full(n, 1e8)
        log_rho = np.full(n, math.log(args.rho))

        nb.bisect_rows(dth[:2], wts[:2], log_rho[:2], lo[:2], hi[:2], 1e-8, 100, 0, 1.0)  # compile
        t_np, (s_np, _, _) = best_of(lambda: npk.bisect_rows(dth, wts, log_rho, lo, hi, 1e-8, 100, kin.w), args.repeat)
        t_nb, (s_nb, _, _) = best_of(lambda: nb.bisect_rows(dth, wts, log_rho, lo, hi, 1e-8, 100, 0, 1.0), args.repeat)
        diff = float(np.max(np.abs(s_np - s_nb) / s_np))
        print(f"{'calibration':<14}{n:>6}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}{diff:>14.2e}")

        P = rng.uniform(size=(n, n))
        P = P + P.T
        np.fill_diagonal(P, 0.0)
        P /= P.sum()
        Y = rng.standard_normal((n, 2))
        pl = plogp(P)
        nb.loss_and_grad(P[:3, :3].copy(), Y[:3], 0, 1.0, 2.0, 0.0)  # compile
        t_np, (l_np, g_np) = best_of(lambda: npk.loss_and_grad(P, Y, kout.k, kout.dk, 2.0), args.repeat)
        t_nb, (l_nb, g_nb) = best_of(lambda: nb.loss_and_grad(P, Y, 0, 1.0, 2.0, pl), args.repeat)
        diff = max(abs(l_np - l_nb) / abs(l_np), float(np.max(np.abs(g_np - g_nb)) / np.max(np.abs(g_np))))
        print(f"{'loss+gradient':<14}{n:>6}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
