"""Per-frequency analysis of x-frozen models.

Freezing ``x = x0`` turns ``P u = 0`` into a third-order ODE in ``t`` for
each frequency.  It is integrated in the balanced variables
``(u, u'/<xi>, u''/<xi>^2)`` so that the growth of the state norm measures
the loss of derivatives directly.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .reduction import ReducedOperator, reduced_from_dict
from .weights import japanese

RTOL = 1e-10
ATOL = 1e-13
DEFAULT_XI = tuple(2.0 ** j for j in range(3, 15))
MAX_POLY_DEG = 12


class StepUnderflowError(ArithmeticError):
    pass


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("EFFHYP_JOBS", "1")))
    except ValueError:
        return 1


def companion_coeffs(r: ReducedOperator, t, xi: float, x0: float = 0.0, c: float = 0.0):
    """``(k0, k1, k2)`` of ``u''' = k2 u'' + k1 u' + k0 u`` at frequency ``xi``.

    ``c`` adds the lower-order symbol ``b1 = i c xi`` (a first-order term in
    ``D_t``), the knob of the robustness sweep.
    """
    t = np.asarray(t, dtype=float)

    def ev(name):
        v = r.field(name)(t, x0, xi)
        return np.broadcast_to(np.asarray(v, dtype=complex), t.shape)
    b1 = ev("b1") + 1j * c * xi
    k2 = -1j * r.pre("b0") * ev("b0")
    k1 = -np.asarray(r.A(t, x0, xi)) + r.pre("b1") * b1 + r.pre("c0") * ev("c0")
    k0 = 1j * (ev("b2") + r.pre("b3") * t ** 2 * ev("b3") + r.pre("c1") * ev("c1")
               + r.pre("d0") * ev("d0"))
    return np.broadcast_to(k0, t.shape), np.broadcast_to(k1, t.shape), np.broadcast_to(k2, t.shape)


def _poly_fit(T: float, fn, tol: float = 1e-13):
    """Monomial coefficients of a polynomial in ``t`` reproducing ``fn`` on [0, T], or ``None``."""
    P = np.polynomial.polynomial
    test = np.linspace(0.0, T, 101)
    ref = np.asarray(fn(test))
    scale = 1.0 + np.max(np.abs(ref), axis=-1, keepdims=True)
    for deg in range(MAX_POLY_DEG + 1):
        nodes = 0.5 * T * (1 - np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1)))
        vals = np.asarray(fn(nodes))
        coef = np.stack([P.polyfit(nodes, v.real, deg) + 1j * P.polyfit(nodes, v.imag, deg)
                         for v in vals])
        approx = np.stack([P.polyval(test, c) for c in coef])
        if np.all(np.abs(approx - ref) <= tol * scale):
            return coef
    return None


@dataclass
class ModeResult:
    xi: float
    amplification: float
    sup_per_data: np.ndarray
    final: np.ndarray
    steps: int
    method: str


def per_frequency_solve(r: ReducedOperator, xi: float, c: float = 0.0, T: float | None = None,
                        x0: float = 0.0, data: np.ndarray | None = None,
                        rtol: float = RTOL, atol: float = ATOL) -> ModeResult:
    """Worst-case growth of the balanced state over ``[0, T]``.

    ``data`` holds balanced initial triples as columns (default: the three
    canonical ones).  The compiled DP5(4) kernel is used when the frozen
    coefficients are polynomials in ``t``; otherwise scipy's RK45 (the same
    Dormand-Prince pair) is used at the same tolerances.
    """
    T = float(r.domain.T if T is None else T)
    s = float(japanese(xi))
    Y0 = np.eye(3, dtype=complex) if data is None else np.asarray(data, dtype=complex).reshape(3, -1)
    norms0 = np.linalg.norm(Y0, axis=0)
    if np.any(norms0 == 0):
        raise ValueError("data columns must be non-zero")

    def balanced(tt):
        k0, k1, k2 = companion_coeffs(r, tt, xi, x0, c)
        return np.stack([k0 / s ** 2, k1 / s, k2])
    kc = _poly_fit(T, balanced)
    if kc is not None:
        Y, sup, steps, status = _kernels.integrate_balanced(kc, s, Y0, 0.0, T, rtol, atol)
        if status == 1:
            raise StepUnderflowError(f"step size underflow at xi = {xi:g}")
        if status == 2:
            raise StepUnderflowError(f"step budget exhausted at xi = {xi:g}")
        method = "dp5-kernel"
    else:
        m = Y0.shape[1]

        def rhs(t, y):
            Yc = y.reshape(3, m)
            K = balanced(np.array([t]))[:, 0]
            return np.stack([s * Yc[1], s * Yc[2], K[0] * Yc[0] + K[1] * Yc[1] + K[2] * Yc[2]]).ravel()
        sol = solve_ivp(rhs, (0.0, T), Y0.ravel(), method="RK45", rtol=rtol, atol=atol, dense_output=False)
        if sol.status != 0:
            raise StepUnderflowError(f"integration failed at xi = {xi:g}: {sol.message}")
        traj = sol.y.reshape(3, m, -1)
        sup = np.max(np.linalg.norm(traj, axis=0), axis=-1)
        Y = traj[:, :, -1]
        steps = sol.t.size - 1
        method = "rk45-scipy"
    ratios = np.asarray(sup) / norms0
    return ModeResult(float(xi), float(np.max(ratios)), ratios, np.asarray(Y), int(steps), method)


@dataclass
class FrequencyRun:
    model: str
    c: float
    xi: np.ndarray
    A: np.ndarray
    methods: list[str] = field(default_factory=list)


@dataclass
class LossFit:
    kappa: float
    residual: float
    n_points: int
    status: str


def _run_one(args) -> tuple[float, str]:
    doc, xi, c, T = args
    res = per_frequency_solve(reduced_from_dict(doc), xi, c, T)
    return res.amplification, res.method


def frequency_run(doc: dict, name: str = "model", c: float = 0.0, xis: Sequence[float] = DEFAULT_XI,
                  T: float = 0.25, jobs: int | None = None) -> FrequencyRun:
    """Amplification table for a reduced-operator document (picklable for worker pools)."""
    jobs = default_jobs() if jobs is None else jobs
    tasks = [(doc, float(x), float(c), float(T)) for x in xis]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            out = list(pool.map(_run_one, tasks))
    else:
        out = [_run_one(a) for a in tasks]
    return FrequencyRun(name, float(c), np.asarray(xis, dtype=float),
                        np.array([a for a, _ in out]), [m for _, m in out])


def loss_fit(run: FrequencyRun | tuple, top: int = 6, bad_residual: float = 0.5) -> LossFit:
    """Least-squares slope of ``log A`` against ``log xi`` over the top ``top`` frequencies."""
    xi, A = (run.xi, run.A) if isinstance(run, FrequencyRun) else (np.asarray(run[0]), np.asarray(run[1]))
    if len(xi) < 5:
        raise ValueError("a loss fit needs at least five frequencies")
    order = np.argsort(xi)
    xi, A = np.asarray(xi)[order][-max(5, top):], np.asarray(A)[order][-max(5, top):]
    X, Y = np.log(xi), np.log(A)
    slope, icpt = np.polyfit(X, Y, 1)
    resid = float(np.sqrt(np.mean((Y - (slope * X + icpt)) ** 2)))
    return LossFit(float(slope), resid, len(xi), "ok" if resid <= bad_residual else "fit-unreliable")


def loss_bounds(Pi: float, N0: int = 4) -> dict[str, float]:
    """Loss bounds ``2N/3 - 2`` for ``N = 13 Pi/2 + N0`` (proved) and ``N = 3 Pi/2 + N0`` (conjectured).

    Both orders are rounded up to integers, the convention of ``hamilton.n_from_pi``.
    """
    N = math.ceil(13.0 * Pi / 2.0 - 1e-12) + N0
    Nc = math.ceil(1.5 * Pi - 1e-12) + N0
    return {"N": N, "M": 2 * N / 3 - 2, "N_conjectured": Nc, "M_conjectured": 2 * Nc / 3 - 2}


@dataclass
class SweepTable:
    model: str
    c: np.ndarray
    kappa: np.ndarray
    residual: np.ndarray
    runs: list[FrequencyRun]

    @property
    def spread(self) -> float:
        return float(np.max(self.kappa) - np.min(self.kappa))

    def growth(self) -> float:
        """``kappa(c_max) - kappa(0)``."""
        i0 = int(np.argmin(np.abs(self.c)))
        return float(self.kappa[int(np.argmax(self.c))] - self.kappa[i0])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "c", "xi", "A"])
            for run in self.runs:
                for x, a in zip(run.xi, run.A):
                    w.writerow([self.model, f"{run.c:.12g}", f"{x:.12g}", f"{a:.12g}"])


def robustness_sweep(doc: dict, name: str, c_grid: Iterable[float], xis: Sequence[float] = DEFAULT_XI,
                     T: float = 0.25, top: int = 6, jobs: int | None = None) -> SweepTable:
    cs = np.asarray(list(c_grid), dtype=float)
    if cs.size == 0 or not np.all(np.isfinite(cs)):
        raise ValueError("c grid must be finite and non-empty")
    runs = [frequency_run(doc, name, c, xis, T, jobs) for c in cs]
    fits = [loss_fit(r, top) for r in runs]
    return SweepTable(name, cs, np.array([f.kappa for f in fits]), np.array([f.residual for f in fits]), runs)
