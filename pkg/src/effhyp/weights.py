"""Time weight ``f(t, xi) = t/3 + <xi>^(-2/3)`` and the scalar weights built on it.

Powers of ``f`` are formed in log space: ``f^(-N)`` spans many decades over
a frequency grid and overflows double precision for N in the hundreds.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

THETA = 1.0 / 3.0


@dataclass(frozen=True)
class WeightSpec:
    N: float
    eps: float = 1.0
    lam: float = 8.0
    theta: float = THETA

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if abs(self.theta - THETA) > 1e-15:
            raise ValueError("theta is fixed to 1/3")


def japanese(xi):
    """``<xi> = sqrt(1 + xi^2)``."""
    return np.sqrt(1.0 + np.square(xi))


def log_f(t, xi):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("the time weight is defined for t >= 0 only")
    return np.log(t / 3.0 + (1.0 + np.square(xi)) ** (-1.0 / 3.0))


def f(t, xi):
    return np.asarray(t, dtype=float) / 3.0 + (1.0 + np.square(xi)) ** (-1.0 / 3.0)


def log_f_power(k, t, xi):
    """``log f^(-k)``."""
    return -np.asarray(k, dtype=float) * log_f(t, xi)


def f_power(k, t, xi):
    """``f(t, xi)^(-k)`` evaluated through its logarithm."""
    return np.exp(log_f_power(k, t, xi))


# -- scalar time weights ----------------------------------------------------

def psi(t, lam):
    t = np.asarray(t, dtype=float)
    return np.exp(-2.0 * lam * t) / t


def dpsi(t, lam):
    t = np.asarray(t, dtype=float)
    return -np.exp(-2.0 * lam * t) * (2.0 * lam * t + 1.0) / t ** 2


def phi_fwd(t, lam):
    return np.asarray(t) * np.exp(2.0 * lam * np.asarray(t))


def phi_bwd(t, lam):
    return np.asarray(t) * np.exp(-2.0 * lam * np.asarray(t))


def planck_h(eps: float, xi):
    """Diagnostic ``h = eps / <xi>`` of the scaled metric."""
    return eps / japanese(xi)


# -- pointwise inequalities --------------------------------------------------

@dataclass
class CubeBoundReport:
    violations: list[tuple[float, float, float]]
    min_margin: float
    n_points: int


def cube_bound_margin(t, xi):
    """``<xi>^-2 + t f^2 - f^3`` computed as written (no cancellation tricks)."""
    ff = f(t, xi)
    return 1.0 / (1.0 + np.square(xi)) + np.asarray(t) * ff ** 2 - ff ** 3


def cube_bound_exact(t, xi):
    """Independent closed form of the same margin: ``(2/27) t^3 + (1/3) t^2 <xi>^(-2/3)``."""
    t = np.asarray(t, dtype=float)
    return 2.0 / 27.0 * t ** 3 + t ** 2 * (1.0 + np.square(xi)) ** (-1.0 / 3.0) / 3.0


def cube_bound_check(t, xi, tol: float = 1e-15) -> CubeBoundReport:
    t, xi = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(xi, dtype=float))
    m = cube_bound_margin(t, xi)
    bad = np.flatnonzero(m < -tol)
    viol = [(float(t.flat[i]), float(xi.flat[i]), float(m.flat[i])) for i in bad]
    return CubeBoundReport(viol, float(np.min(m)), int(m.size))


@dataclass
class PsiReport:
    lam: float
    min_rel_margin_lambda: float
    min_rel_margin_t2: float
    min_rel_margin_sq: float

    @property
    def passed(self) -> bool:
        return min(self.min_rel_margin_lambda, self.min_rel_margin_t2, self.min_rel_margin_sq) > 0


def psi_inequalities(lam: float, t_grid: Sequence[float]) -> PsiReport:
    """Relative margins of ``-psi' > lam psi``, ``-psi' > e^(-2 lam t)/t^2 > psi^2``."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0):
        raise ValueError("psi inequalities need t > 0")
    # logarithms keep the margins meaningful for tiny t
    log_mdpsi = -2 * lam * t + np.log1p(2 * lam * t) - 2 * np.log(t)
    log_lpsi = np.log(lam) - 2 * lam * t - np.log(t)
    log_mid = -2 * lam * t - 2 * np.log(t)
    log_sq = -4 * lam * t - 2 * np.log(t)
    m1 = -np.expm1(log_lpsi - log_mdpsi)
    m2 = -np.expm1(log_mid - log_mdpsi)
    m3 = -np.expm1(log_sq - log_mid)
    return PsiReport(lam, float(np.min(m1)), float(np.min(m2)), float(np.min(m3)))


def weight_bounds_check(t, xi) -> dict[str, float]:
    """Min margins of ``f^-1 <= <xi>^(2/3)/(1+t/3)`` and ``f^-1 >= 1/(1+t)`` (t <= 1)."""
    t, xi = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(xi, dtype=float))
    finv = 1.0 / f(t, xi)
    upper = (1.0 + xi ** 2) ** (1.0 / 3.0) / (1.0 + t / 3.0)
    lower = 1.0 / (1.0 + t)
    return {"upper": float(np.min((upper - finv) / upper)),
            "lower": float(np.min((finv - lower) / lower))}


# -- symbol-class constants ---------------------------------------------------

def _g_derivs(xi):
    # g = <xi>^(-2/3) and its first three xi-derivatives
    w = 1.0 + np.square(xi)
    g0 = w ** (-1.0 / 3.0)
    g1 = -2.0 / 3.0 * xi * w ** (-4.0 / 3.0)
    g2 = -2.0 / 3.0 * w ** (-4.0 / 3.0) + 16.0 / 9.0 * xi ** 2 * w ** (-7.0 / 3.0)
    g3 = 16.0 / 3.0 * xi * w ** (-7.0 / 3.0) - 224.0 / 27.0 * xi ** 3 * w ** (-10.0 / 3.0)
    return g0, g1, g2, g3


def dxi_f_power_ratio(N: float, order: int, t, xi):
    """``d^order/dxi^order f^(-N)`` divided by ``f^(-N)`` (closed form)."""
    _, g1, g2, g3 = _g_derivs(np.asarray(xi, dtype=float))
    inv = 1.0 / f(t, xi)
    a, b, c = g1 * inv, g2 * inv, g3 * inv
    if order == 0:
        return np.ones_like(inv)
    if order == 1:
        return -N * a
    if order == 2:
        return N * (N + 1) * a ** 2 - N * b
    if order == 3:
        return -N * (N + 1) * (N + 2) * a ** 3 + 3 * N * (N + 1) * a * b - N * c
    raise ValueError("orders up to 3 are supported")


def symbol_class_constants(Ns: Iterable[float], orders: Iterable[int] = (0, 1, 2, 3),
                           t_samples: Sequence[float] | None = None,
                           xi_samples: Sequence[float] | None = None) -> dict[int, dict[float, float]]:
    """Smallest ``C`` with ``|d^a f^-N| <= C N^a f^-N <xi>^-a`` on the samples."""
    t = np.linspace(0.0, 1.0, 41) if t_samples is None else np.asarray(t_samples, dtype=float)
    xi = (np.concatenate([-np.logspace(-2, 5, 200), [0.0], np.logspace(-2, 5, 200)])
          if xi_samples is None else np.asarray(xi_samples, dtype=float))
    T, XI = np.meshgrid(t, xi, indexing="ij")
    out: dict[int, dict[float, float]] = {}
    for a in orders:
        out[a] = {}
        for N in Ns:
            r = np.abs(dxi_f_power_ratio(N, a, T, XI)) * japanese(XI) ** a / float(N) ** a
            out[a][float(N)] = float(np.max(r))
    return out
