"""Hot loops, compiled with numba when available.

Each kernel is written once as plain Python over scalars and small arrays;
``EFFHYP_NO_NUMBA=1`` keeps the interpreted version (useful for debugging
and for the speed comparison in ``benchmarks/bench_kernels.py``).
"""
from __future__ import annotations

import os

import numpy as np

DISABLED = os.environ.get("EFFHYP_NO_NUMBA", "").strip() not in ("", "0")

try:
    if DISABLED:
        raise ImportError("numba disabled by EFFHYP_NO_NUMBA")
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def _jit(fn):
    return _njit(cache=True)(fn) if HAVE_NUMBA else fn


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
], dtype=float)
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def _dp5_balanced(kc, s, Y0, t0, t1, rtol, atol, h0, max_steps, C, A, B5, B4):
    """Adaptive DP5(4) for the companion system; returns (Y(t1), sup column norms, steps, status).

    ``status`` is 0 on success, 1 when the step size underflows and 2 when
    ``max_steps`` is exhausted.
    """
    n, m = Y0.shape
    Y = Y0.copy()
    K = np.zeros((7, n, m), dtype=np.complex128)
    Ytmp = np.zeros((n, m), dtype=np.complex128)
    Y5 = np.zeros((n, m), dtype=np.complex128)
    sup = np.zeros(m)
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += abs(Y[i, j]) ** 2
        sup[j] = np.sqrt(acc)
    span = t1 - t0
    direction = 1.0 if span >= 0 else -1.0
    t = t0
    h = min(abs(h0), abs(span)) if h0 > 0 else abs(span) / 100.0
    steps = 0
    status = 0
    # companion system y0' = s y1, y1' = s y2, y2' = K0 y0 + K1 y1 + K2 y2 (K_j polynomial in t)
    deg = kc.shape[1] - 1
    tt = t
    k0 = 0j
    k1 = 0j
    k2 = 0j
    for q in range(deg, -1, -1):
        k0 = k0 * tt + kc[0, q]
        k1 = k1 * tt + kc[1, q]
        k2 = k2 * tt + kc[2, q]
    for j in range(m):
        K[0, 0, j] = s * Y[1, j]
        K[0, 1, j] = s * Y[2, j]
        K[0, 2, j] = k0 * Y[0, j] + k1 * Y[1, j] + k2 * Y[2, j]
    while direction * (t1 - t) > 0:
        if steps >= max_steps:
            status = 2
            break
        if h < 1e-14 * max(1.0, abs(t)):
            status = 1
            break
        if h > direction * (t1 - t):
            h = direction * (t1 - t)
        hs = direction * h
        for st in range(1, 7):
            for i in range(n):
                for j in range(m):
                    v = Y[i, j]
                    for q in range(st):
                        v += hs * A[st, q] * K[q, i, j]
                    Ytmp[i, j] = v
            tt = t + C[st] * hs
            k0 = 0j
            k1 = 0j
            k2 = 0j
            for q in range(deg, -1, -1):
                k0 = k0 * tt + kc[0, q]
                k1 = k1 * tt + kc[1, q]
                k2 = k2 * tt + kc[2, q]
            for j in range(m):
                K[st, 0, j] = s * Ytmp[1, j]
                K[st, 1, j] = s * Ytmp[2, j]
                K[st, 2, j] = k0 * Ytmp[0, j] + k1 * Ytmp[1, j] + k2 * Ytmp[2, j]
        err = 0.0
        for i in range(n):
            for j in range(m):
                y5 = Y[i, j]
                e = 0j
                for q in range(7):
                    y5 += hs * B5[q] * K[q, i, j]
                    e += hs * (B5[q] - B4[q]) * K[q, i, j]
                Y5[i, j] = y5
                sc = atol + rtol * max(abs(Y[i, j]), abs(y5))
                r = abs(e) / sc
                err += r * r
        err = np.sqrt(err / (n * m))
        if err <= 1.0:
            t = t + hs
            for i in range(n):
                for j in range(m):
                    Y[i, j] = Y5[i, j]
            for i in range(n):
                for j in range(m):
                    K[0, i, j] = K[6, i, j]
            for j in range(m):
                acc = 0.0
                for i in range(n):
                    acc += abs(Y[i, j]) ** 2
                nrm = np.sqrt(acc)
                if nrm > sup[j]:
                    sup[j] = nrm
            steps += 1
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            h = h * min(5.0, max(0.2, fac))
        else:
            h = h * max(0.2, 0.9 * err ** -0.2)
    return Y, sup, steps, status


def _newton_cubic(t, a2, b3, rho0, tol, max_iter, rho, iters, ok):
    """Newton for ``t rho^3 - a2 rho + b3 = 0`` at each point, in place."""
    for i in range(t.shape[0]):
        r = rho0[i]
        conv = False
        it = 0
        for it in range(1, max_iter + 1):
            F = t[i] * r ** 3 - a2[i] * r + b3[i]
            dF = 3.0 * t[i] * r ** 2 - a2[i]
            if dF == 0.0:
                break
            step = F / dF
            r -= step
            if abs(step) <= tol * max(1.0, abs(r)):
                conv = True
                break
        rho[i] = r
        iters[i] = it
        ok[i] = conv


dp5_balanced_py, newton_cubic_py = _dp5_balanced, _newton_cubic
dp5_balanced, newton_cubic = _jit(_dp5_balanced), _jit(_newton_cubic)


def integrate_balanced(kc, s, Y0, t0, t1, rtol=1e-10, atol=1e-13, h0=0.0, max_steps=5_000_000,
                       compiled: bool | None = None):
    """Wrapper choosing the compiled or interpreted DP5(4) kernel."""
    use = HAVE_NUMBA if compiled is None else (compiled and HAVE_NUMBA)
    fn = dp5_balanced if use else dp5_balanced_py
    return fn(np.ascontiguousarray(kc, dtype=np.complex128), float(s),
              np.ascontiguousarray(Y0, dtype=np.complex128), float(t0), float(t1),
              float(rtol), float(atol), float(h0), int(max_steps), _C, _A, _B5, _B4)


def newton_smooth_root(t, a2, b3, rho0=None, tol=1e-14, max_iter=50, compiled: bool | None = None):
    t, a2, b3 = (np.ascontiguousarray(np.ravel(v), dtype=float) for v in np.broadcast_arrays(t, a2, b3))
    rho0 = b3 / a2 if rho0 is None else np.ascontiguousarray(np.ravel(rho0), dtype=float)
    rho = np.empty_like(t)
    iters = np.zeros(t.shape, dtype=np.int64)
    ok = np.zeros(t.shape, dtype=np.bool_)
    use = HAVE_NUMBA if compiled is None else (compiled and HAVE_NUMBA)
    (newton_cubic if use else newton_cubic_py)(t, a2, b3, rho0, float(tol), int(max_iter), rho, iters, ok)
    return rho, iters, ok
