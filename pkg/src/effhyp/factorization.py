"""Factorising the reduced principal symbol.

For ``p3 = tau^3 - A tau + t^2 b3`` with ``A = t a2 + alpha`` a smooth real
root ``gamma`` gives ``p3 = ((tau - a)^2 - b)(tau - gamma)`` with
``a = -gamma/2`` and ``b = t a2 - 3 a^2``.  When ``alpha`` vanishes,
``gamma = t rho`` where ``t rho^3 - a2 rho + b3 = 0`` and ``rho`` is found
by Newton from ``b3/a2``.  When ``alpha`` does not vanish near a point with
``b3 != 0`` no smooth real root exists; ``nonfactorizability_probe``
exhibits this as unbounded divided differences of the real root branches.

Scaled operators are handled by folding the eps prefactors into ``alpha``
and ``b3``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .reduction import ReducedOperator
from .symbols import companion_roots

RESIDUAL_TOL = 1e-10
BLOWUP_FACTOR = 1e3
EXACT_TOL = 1e-14
NEWTON_MAX_ITER = 50


class FactorizationError(ValueError):
    """Precondition of a factorisation routine violated."""


class NewtonError(ArithmeticError):
    def __init__(self, points):
        self.points = points
        super().__init__(f"Newton did not converge at {len(points)} point(s), first {points[0]}")


def _fields(r: ReducedOperator, t, x, xi):
    """``(a2, alpha, b3)`` at the given points with the eps prefactors folded in."""
    t, x, xi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, x, xi)))
    a2 = np.broadcast_to(np.real(r.a2(t, x, xi)), t.shape).astype(float)
    al = np.broadcast_to(r.pre("alpha") * np.real(r.alpha(t, x, xi)), t.shape).astype(float)
    b3 = np.broadcast_to(r.pre("b3") * np.real(r.b3(t, x, xi)), t.shape).astype(float)
    return t, a2, al, b3


def p3(tau, t, a2, alpha, b3):
    return tau ** 3 - (t * a2 + alpha) * tau + t * t * b3


@dataclass
class FactorizationResult:
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    gamma: np.ndarray
    rho: np.ndarray
    a: np.ndarray
    b: np.ndarray
    iters: np.ndarray
    residual: float
    b_min: float
    a2: np.ndarray = field(repr=False, default=None)
    b3: np.ndarray = field(repr=False, default=None)

    @property
    def ok(self) -> bool:
        return self.residual < RESIDUAL_TOL and self.b_min >= -RESIDUAL_TOL

    def quadratic_roots(self) -> np.ndarray:
        """Roots ``a +- sqrt(b)`` of the quadratic factor (complex where ``b < 0``)."""
        sb = np.sqrt(self.b.astype(complex))
        return np.stack([self.a + sb, self.a - sb], axis=-1)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "xi", "gamma", "rho", "a", "b"])
            for row in zip(*(np.ravel(v) for v in (self.t, self.x, self.xi, self.gamma, self.rho,
                                                   self.a, self.b))):
                w.writerow([f"{v:.15g}" for v in row])

    def summary(self) -> dict:
        return {"points": int(self.gamma.size), "residual": self.residual, "b_min": self.b_min,
                "max_newton_iters": int(self.iters.max(initial=0)), "ok": self.ok}


def factor_residual(t, a2, b3, gamma, n_tau: int = 41) -> float:
    """``sup |p3 - ((tau-a)^2 - b)(tau-gamma)|`` over a tau grid, relative to the monomial scale.

    The tau grid covers twice the root bound at each point.
    """
    t, a2, b3, gamma = (np.asarray(v, dtype=float)[..., None] for v in (t, a2, b3, gamma))
    a = -gamma / 2
    b = t * a2 - 3 * a * a
    bound = 2 * np.maximum(np.sqrt(np.abs(t * a2)), np.cbrt(np.abs(t * t * b3))) + 1.0
    tau = bound * np.linspace(-1.0, 1.0, n_tau)
    exact = p3(tau, t, a2, 0.0, b3)
    prod = ((tau - a) ** 2 - b) * (tau - gamma)
    scale = np.max(np.abs(tau) ** 3 + np.abs(t * a2 * tau) + np.abs(t * t * b3), axis=-1)
    return float(np.max(np.max(np.abs(exact - prod), axis=-1) / scale))


def smooth_root(r: ReducedOperator, t, x, xi, alpha_tol: float = 0.0, compiled: bool | None = None,
                raise_on_failure: bool = True) -> FactorizationResult:
    """Smooth real root ``gamma = t rho`` on the broadcast grid of ``(t, x, xi)``.

    Requires ``alpha = 0`` at every sample and ``a2 > 0``.
    """
    t, a2, al, b3 = _fields(r, t, x, xi)
    if np.any(np.abs(al) > alpha_tol):
        raise FactorizationError("smooth_root needs alpha = 0 at every sample")
    if np.any(a2 <= 0):
        raise FactorizationError("smooth_root needs a2 > 0")
    if np.any(t < 0):
        raise FactorizationError("smooth_root needs t >= 0")
    rho, iters, ok = _kernels.newton_smooth_root(t, a2, b3, max_iter=NEWTON_MAX_ITER, compiled=compiled)
    rho, iters, ok = rho.reshape(t.shape), iters.reshape(t.shape), ok.reshape(t.shape)
    if raise_on_failure and not ok.all():
        bad = np.argwhere(~ok)
        raise NewtonError([(float(t[tuple(i)]), float(np.broadcast_to(x, t.shape)[tuple(i)]),
                            float(np.broadcast_to(xi, t.shape)[tuple(i)])) for i in bad])
    gamma = t * rho
    a = -gamma / 2
    b = t * a2 - 3 * a * a
    res = factor_residual(t, a2, b3, gamma) if t.size else 0.0
    xs, xis = (np.broadcast_to(np.asarray(v, dtype=float), t.shape) for v in (x, xi))
    return FactorizationResult(t, xs, xis, gamma, rho, a, b, iters, res,
                               float(b.min(initial=np.inf)), a2, b3)


@dataclass
class CardanoResult:
    roots: np.ndarray
    C: np.ndarray
    delta: np.ndarray
    status: np.ndarray

    def real_branch(self, gamma) -> tuple[np.ndarray, np.ndarray]:
        """Index ``k`` of the root closest to ``gamma`` and its distance."""
        d = np.abs(self.roots - np.asarray(gamma)[..., None])
        k = np.argmin(d, axis=-1)
        return k, np.take_along_axis(d, k[..., None], axis=-1)[..., 0]


def cardano_branch(r: ReducedOperator, t, x, xi, tol: float = 1e-12) -> CardanoResult:
    """All three roots from the closed form with the principal cube root.

    ``x_k = -(u_k C + 3 t a2 / (u_k C)) / 3`` with ``C^3 = (27 t^2 b3 + sqrt(-27 Delta)) / 2``
    and ``Delta = 4 t^3 a2^3 - 27 t^4 b3^2``; ``u_k = exp(2 pi i k / 3)``.  A
    nonzero ``alpha`` enters through ``A = t a2 + alpha`` in place of ``t a2``.
    """
    t, a2, al, b3 = _fields(r, t, x, xi)
    A = t * a2 + al
    q = t * t * b3
    delta = 4 * A ** 3 - 27 * q * q
    c3 = (27 * q + np.sqrt((-27 * delta).astype(complex))) / 2
    C = c3 ** (1.0 / 3.0)
    u = np.exp(2j * np.pi * np.arange(3) / 3)
    zero = np.abs(C) == 0
    uc = u * np.where(zero, 1.0, C)[..., None]
    roots = -(uc + 3 * A[..., None] / uc) / 3
    roots = np.where(zero[..., None], 0j, roots)
    scale = 4 * np.abs(A) ** 3 + 27 * q * q
    status = np.where(delta < -tol * np.maximum(scale, 1e-300), "complex-pair", "real")
    return CardanoResult(roots, C, delta, status)


@dataclass
class DerivativeFit:
    limit: float
    beta: float
    prefactor: float
    status: str
    t: np.ndarray
    deviation: np.ndarray

    @property
    def in_band(self) -> bool:
        return self.status == "exact" or 0.35 <= self.beta <= 0.65


def dyadic_root(r: ReducedOperator, x: float = 0.0, xi: float = 1.0,
                j_range: Sequence[int] = range(4, 21)) -> FactorizationResult:
    """``smooth_root`` on ``t = 2^-j`` at one ``(x, xi)``."""
    t = 2.0 ** -np.asarray(list(j_range), dtype=float)
    return smooth_root(r, t, x, xi)


def derivative_check(result: FactorizationResult) -> DerivativeFit:
    """Fit ``|gamma(t)/t - b3/a2| ~ C t^beta`` over the tabulated times.

    The limit ``b3/a2`` is taken at the smallest tabulated time.  Deviations
    all below ``EXACT_TOL`` (``b3 = 0``) are reported as exact without a fit.
    """
    t, rho = np.ravel(result.t), np.ravel(result.rho)
    if np.any(t <= 0) or t.size < 3:
        raise FactorizationError("derivative_check needs at least three positive times")
    i0 = int(np.argmin(t))
    limit = float(np.ravel(result.b3)[i0] / np.ravel(result.a2)[i0])
    dev = np.abs(rho - limit)
    if np.all(dev < EXACT_TOL):
        return DerivativeFit(limit, float("nan"), 0.0, "exact", t, dev)
    if np.any(dev == 0):
        raise FactorizationError("degenerate fit: some deviations vanish exactly")
    beta, logc = np.polyfit(np.log(t), np.log(dev), 1)
    return DerivativeFit(limit, float(beta), float(np.exp(logc)), "fit", t, dev)


@dataclass
class ProbeReport:
    regime: str
    xi0: float
    m: np.ndarray
    x: np.ndarray
    alpha: np.ndarray
    quotients: dict
    growth: dict
    min_delta: float
    blowup: bool

    def summary(self) -> dict:
        return {"regime": self.regime, "xi0": self.xi0, "blowup": self.blowup,
                "growth": {k: float(v) for k, v in self.growth.items()},
                "min_discriminant": self.min_delta,
                "quotients": {k: [float(q) for q in v] for k, v in self.quotients.items()}}


def _branches(t_end: float, x: float, xi0: float, r: ReducedOperator, n: int):
    """Real roots along ``t in [0, t_end]`` at fixed ``(x, xi0)``, sorted.

    While the discriminant stays positive the three roots never meet, so the
    k-th smallest root is a continuous branch; ``min_delta`` certifies this.
    """
    ts = t_end * np.linspace(0.0, 1.0, n) ** 2
    _, a2, al, b3 = _fields(r, ts, x, xi0)
    A = ts * a2 + al
    roots = companion_roots(np.zeros_like(ts), -A, ts * ts * b3)
    delta = 4 * A ** 3 - 27 * (ts * ts * b3) ** 2
    scale = 4 * np.abs(A) ** 3 + 27 * (ts * ts * b3) ** 2
    return np.sort(roots.real, axis=-1), float(np.min(delta / scale))


def nonfactorizability_probe(r: ReducedOperator, xi0: float = 1.0, ms: Sequence[int] = range(1, 13),
                             x_of_m=lambda m: 2.0 ** -m, n_path: int = 257,
                             factor: float = BLOWUP_FACTOR) -> ProbeReport:
    """Look for a smooth real root near ``(t, x) = (0, 0)`` at frequency ``xi0``.

    Each real root branch is continued in ``t`` from 0 at ``x_m``; with
    ``D(t) = (gamma(t) - gamma(0)) / t`` the quotient
    ``|D(t2) - D(t1)| / (t2 - t1)`` between the path points ``t1 = alpha_m^2``
    and ``t2 = alpha_m`` stays bounded for a smooth root.  Blow-up by
    ``factor`` over the first ``m`` on every branch means no branch is smooth.

    If ``alpha`` vanishes identically the smooth root from ``smooth_root``
    exists; the same quotient is then reported on the surrogate path
    ``t1 = s x_m^2, t2 = s x_m`` with ``s = a2^(3/2) / (10 |b3|)`` keeping the
    path inside the region where the root is well conditioned.
    """
    ms = np.asarray(list(ms), dtype=int)
    xs = np.array([x_of_m(int(m)) for m in ms], dtype=float)
    _, _, _, b30 = _fields(r, 0.0, 0.0, xi0)
    if float(b30) == 0.0:
        raise FactorizationError("b3(0, 0, xi0) must be nonzero")
    _, _, al, _ = _fields(r, 0.0, xs, xi0)
    probe = np.linspace(r.domain.X[0], r.domain.X[1], 201)
    _, _, al_wide, _ = _fields(r, 0.0, probe, xi0)
    if r.alpha.is_zero or not np.any(al_wide):
        _, a20, _, _ = _fields(r, 0.0, 0.0, xi0)
        sc = float(a20) ** 1.5 / (10 * abs(float(b30)))
        t1, t2 = sc * xs ** 2, sc * xs
        res = smooth_root(r, np.stack([t1, t2]), xs, xi0)
        D = res.rho
        q = np.abs(D[1] - D[0]) / (t2 - t1)
        quot = {"smooth": q}
        growth = {"smooth": float(np.max(q) / q[0]) if q[0] else float("inf")}
        return ProbeReport("factorizable regime", float(xi0), ms, xs, al, quot, growth, 1.0,
                           growth["smooth"] >= factor)
    if np.any(al == 0):
        raise FactorizationError("alpha must be nonzero along the probe sequence")
    if np.any(al < 0):
        raise FactorizationError("alpha must be nonnegative along the probe sequence")

    names = ("lower", "middle", "upper")
    quot = {k: np.empty(len(ms)) for k in names}
    min_delta = np.inf
    for i, (x, a) in enumerate(zip(xs, al)):
        t1, t2 = a * a, a
        r1, md1 = _branches(t1, x, xi0, r, n_path)
        r2, md2 = _branches(t2, x, xi0, r, n_path)
        min_delta = min(min_delta, md1, md2)
        for k, name in enumerate(names):
            D1 = (r1[-1, k] - r1[0, k]) / t1
            D2 = (r2[-1, k] - r2[0, k]) / t2
            quot[name][i] = abs(D2 - D1) / (t2 - t1)
    growth = {k: float(np.max(v) / v[0]) for k, v in quot.items()}
    blow = all(g >= factor for g in growth.values()) and min_delta > 0
    regime = "non-factorizable" if blow else "inconclusive"
    return ProbeReport(regime, float(xi0), ms, xs, al, quot, growth, float(min_delta), blow)
