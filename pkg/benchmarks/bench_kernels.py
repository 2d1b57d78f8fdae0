"""Compiled versus interpreted kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Times the DP5(4) per-frequency integrator and the vectorised Newton root
solver in both forms and checks that they agree.  The interpreted form is
what ``EFFHYP_NO_NUMBA=1`` selects at import time.
"""
import argparse
import timeit

import numpy as np

from effhyp import _kernels as K
from effhyp import freqlab as fl
from effhyp import models
from effhyp.reduction import reduced_from_dict
from effhyp.weights import japanese


def dp5_case(xi):
    r = reduced_from_dict(models.get("demo-scaled"))

    def balanced(tt):
        k0, k1, k2 = fl.companion_coeffs(r, tt, xi)
        s = japanese(xi)
        return np.stack([k0 / s ** 2, k1 / s, k2])
    kc = fl._poly_fit(0.25, balanced)
    return kc, float(japanese(xi)), np.eye(3, dtype=complex)


def newton_case(n, seed=0):
    rng = np.random.default_rng(seed)
    a2 = rng.uniform(1.0, 2.0, n)
    b3 = rng.uniform(-1.0, 1.0, n)
    t = rng.uniform(0, 1, n) * 0.1 * a2 ** 1.5 / np.abs(b3)
    return t, a2, b3


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--xi", type=float, default=256.0)
    p.add_argument("--points", type=int, default=200_000)
    args = p.parse_args()
    if not K.HAVE_NUMBA:
        print("numba unavailable (or EFFHYP_NO_NUMBA set); nothing to compare")
        return

    kc, s, Y0 = dp5_case(args.xi)
    run = {c: (lambda c=c: K.integrate_balanced(kc, s, Y0, 0.0, 0.25, compiled=c)) for c in (True, False)}
    run[True]()  # compile
    Yc, supc, steps, _ = run[True]()
    Yp, supp, _, _ = run[False]()
    tc, tp = best_of(run[True], args.repeat), best_of(run[False], args.repeat)
    print(f"dp5  xi={args.xi:g} steps={steps:6d}  numba {tc * 1e3:9.2f} ms  python {tp * 1e3:9.2f} ms"
          f"  speedup {tp / tc:7.1f}x  max|dY|={np.max(np.abs(Yc - Yp)):.1e}")

    t, a2, b3 = newton_case(args.points)
    run = {c: (lambda c=c: K.newton_smooth_root(t, a2, b3, compiled=c)) for c in (True, False)}
    run[True]()
    rc, _, _ = run[True]()
    rp, _, _ = run[False]()
    tc, tp = best_of(run[True], args.repeat), best_of(run[False], args.repeat)
    print(f"newton points={args.points:d}  numba {tc * 1e3:9.2f} ms  python {tp * 1e3:9.2f} ms"
          f"  speedup {tp / tc:7.1f}x  max|drho|={np.max(np.abs(rc - rp)):.1e}")


if __name__ == "__main__":
    main()
