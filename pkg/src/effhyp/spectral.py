"""Periodic pseudospectral realisation of the scaled operator.

Convention: ``D_t = -i d/dt`` and ``D_x = -i d/dx``.  Then

    P u = i u''' + i A u' + b2 u + eps^(1/3) (t^2 b3 u - i b1 u')
          - eps^(2/3) b0 u'' + eps c1 u - i eps^(4/3) c0 u' + eps^2 d0 u,

with ``A = t a2 + eps^(-2/3) alpha`` and primes meaning time derivatives.
Solving ``P u = F`` for the top derivative gives ``u''' = -i (F - R)`` where
``R`` collects every term except ``i u'''``.

A symbol ``a(t, x, xi)`` of degree ``d`` is quantised on the left,
``a(t, x, +1) |D|^d Pi_+ + a(t, x, -1) |D|^d Pi_-`` (``Pi_pm`` the projections
on positive/negative frequencies).  Coefficients see the periodised
coordinate ``(L/2pi) sin(2pi x/L)``, which agrees with ``x`` to third order
at the origin and makes every coefficient analytic on the torus.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .reduction import ReducedOperator
from .symbols import CoefficientField
from .weights import japanese

GROWTH_LIMIT = 1e8
RESOLVED_TOL = 1e-12


class CFLError(ValueError):
    """Requested time step exceeds the stability bound."""


class InstabilityError(ArithmeticError):
    """Solution norm jumped by more than ``GROWTH_LIMIT`` in one step."""


class TraceError(ValueError):
    """Traces that should vanish at the data end do not."""


@dataclass(frozen=True)
class Grid1D:
    n: int
    L: float = 8 * np.pi

    def __post_init__(self) -> None:
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError("n must be a power of two, at least 16")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def x(self) -> np.ndarray:
        return -self.L / 2 + self.L * np.arange(self.n) / self.n

    @property
    def xi(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.L / self.n)

    @property
    def x_periodic(self) -> np.ndarray:
        return self.L / (2 * np.pi) * np.sin(2 * np.pi * self.x / self.L)

    @property
    def weight(self) -> float:
        """Quadrature weight of a grid point."""
        return self.L / self.n


@dataclass
class Field:
    """Grid values with spectral access; value semantics (arrays are copied)."""
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.array(self.values, dtype=complex)
        if self.values.shape != (self.grid.n,):
            raise ValueError("field shape does not match the grid")

    @classmethod
    def from_hat(cls, grid: Grid1D, hat) -> "Field":
        return cls(grid, np.fft.ifft(hat))

    @classmethod
    def from_function(cls, grid: Grid1D, fn: Callable) -> "Field":
        return cls(grid, fn(grid.x))

    @property
    def hat(self) -> np.ndarray:
        return np.fft.fft(self.values)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __mul__(self, c) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def norm(self, s: float = 0.0) -> float:
        return sobolev_norm(self.values, s, self.grid)


@dataclass
class State:
    t: float
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray

    @classmethod
    def zero(cls, grid: Grid1D, t: float) -> "State":
        z = np.zeros(grid.n, dtype=complex)
        return cls(t, z, z.copy(), z.copy())

    def trace_norm(self, grid: Grid1D) -> float:
        return max(sobolev_norm(v, 0.0, grid) for v in (self.u, self.du, self.d2u))


@dataclass
class Trajectory:
    grid: Grid1D
    t: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    d3u: np.ndarray
    forcing: np.ndarray
    meta: dict = field(default_factory=dict)

    def state(self, i: int) -> State:
        return State(float(self.t[i]), self.u[i], self.du[i], self.d2u[i])

    def __len__(self) -> int:
        return len(self.t)

    def to_csv(self, path: str | Path, every: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "re_u", "im_u"])
            for i in range(0, len(self.t), every):
                for xj, v in zip(self.grid.x, self.u[i]):
                    w.writerow([f"{self.t[i]:.12g}", f"{xj:.12g}", f"{v.real:.12g}", f"{v.imag:.12g}"])

    def spectrum_csv(self, path: str | Path, every: int = 1) -> None:
        xi = self.grid.xi
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "xi", "abs_uhat"])
            for i in range(0, len(self.t), every):
                for k, v in zip(xi, np.abs(np.fft.fft(self.u[i]))):
                    w.writerow([f"{self.t[i]:.12g}", f"{k:.12g}", f"{v:.12g}"])


# -- multipliers and norms ------------------------------------------------------

def multiplier(m, v, grid: Grid1D | None = None) -> np.ndarray:
    """``ifft(m(xi) * fft(v))``; ``m`` is an array over ``grid.xi`` or a callable."""
    v = np.asarray(v.values if isinstance(v, Field) else v)
    if callable(m):
        if grid is None:
            raise ValueError("a callable symbol needs the grid")
        m = m(grid.xi)
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise FloatingPointError("multiplier symbol is not finite on the grid")
    return np.fft.ifft(m * np.fft.fft(v, axis=-1), axis=-1)


def sobolev_norm(v, s: float, grid: Grid1D) -> float:
    """``H^s`` norm with weight ``<xi>^s`` and quadrature weight ``L/n``."""
    v = np.asarray(v.values if isinstance(v, Field) else v)
    vh = np.fft.fft(v, axis=-1)
    w = japanese(grid.xi) ** (2 * s)
    return float(np.sqrt(grid.L / grid.n ** 2 * np.sum(w * np.abs(vh) ** 2)))


def sobolev_norms(v: np.ndarray, s: float, grid: Grid1D) -> np.ndarray:
    """Row-wise ``sobolev_norm`` for a stack of fields."""
    vh = np.fft.fft(v, axis=-1)
    w = japanese(grid.xi) ** (2 * s)
    return np.sqrt(grid.L / grid.n ** 2 * np.sum(w * np.abs(vh) ** 2, axis=-1))


def inner(v, w, grid: Grid1D, weight=None) -> complex:
    """``<m(D) v, w>`` by Parseval; ``weight`` is the symbol ``m`` on the grid."""
    vh, wh = np.fft.fft(v, axis=-1), np.fft.fft(w, axis=-1)
    m = 1.0 if weight is None else weight
    return np.sum(m * vh * np.conj(wh), axis=-1) * grid.L / grid.n ** 2


# -- the operator on the grid ------------------------------------------------------

# (name, eps power key, derivative order in t, factor)
_TERMS = (
    ("b2", "b2", 0, 1.0),
    ("b3", "b3", 0, None),      # t^2 b3, handled separately
    ("b1", "b1", 1, -1j),
    ("b0", "b0", 2, -1.0),
    ("c1", "c1", 0, 1.0),
    ("c0", "c0", 1, -1j),
    ("d0", "d0", 0, 1.0),
)


def _col(t):
    """Time as a column so it broadcasts against ``(..., n)`` stacks."""
    return np.asarray(t, dtype=float)[..., None]


class _Quantised:
    """Left quantisation of one coefficient field on a grid.

    ``t`` may be a scalar or a 1-D array; fields are then ``(n,)`` or ``(m, n)``.
    """

    def __init__(self, fld: CoefficientField, grid: Grid1D, T: float) -> None:
        self.f = fld
        self.grid = grid
        self.deg = fld.degree
        xi = grid.xi
        self.mag = np.abs(xi) ** self.deg if self.deg else np.ones_like(xi)
        self.pos, self.neg, self.zero = xi > 0, xi < 0, xi == 0
        xs = grid.x_periodic
        probe = [(t, s) for t in np.linspace(0.0, T, 5) for s in (1.0, -1.0)]
        vals = [np.broadcast_to(fld(t, xs, s), xs.shape) for t, s in probe]
        self.x_independent = all(np.ptp(v.real) + np.ptp(v.imag) <= 1e-14 * (1 + np.abs(v).max())
                                 for v in vals)
        self.identically_zero = fld.is_zero or all(np.all(v == 0) for v in vals)

    def coeffs(self, t):
        tc = _col(t)
        xs = self.grid.x_periodic
        shape = np.broadcast_shapes(tc.shape, xs.shape)
        ap = np.broadcast_to(np.asarray(self.f(tc, xs, 1.0), dtype=complex), shape)
        am = np.broadcast_to(np.asarray(self.f(tc, xs, -1.0), dtype=complex), shape)
        return ap, am

    def symbol(self, t) -> np.ndarray:
        """Fourier multiplier (x-independent case), shape ``(..., n)``."""
        ap, am = self.coeffs(t)
        p0, m0 = ap[..., :1], am[..., :1]
        m = np.where(self.pos, p0, m0) * self.mag
        if self.deg == 0:
            m = np.where(self.zero, 0.5 * (p0 + m0), m)
        return m

    def apply_hat(self, t, vh):
        """Return ``(hat_part, phys_part)``; one of them is ``None``."""
        if self.x_independent:
            return self.symbol(t) * vh, None
        ap, am = self.coeffs(t)
        vp = np.fft.ifft(np.where(self.pos, self.mag * vh, 0.0), axis=-1)
        vm = np.fft.ifft(np.where(self.neg, self.mag * vh, 0.0), axis=-1)
        out = ap * vp + am * vm
        if self.deg == 0:
            out = out + 0.5 * (ap + am) * np.fft.ifft(np.where(self.zero, vh, 0.0), axis=-1)
        return None, out

    def apply(self, t, v):
        h, p = self.apply_hat(t, np.fft.fft(v, axis=-1))
        return np.fft.ifft(h, axis=-1) if p is None else p

    def spectrum_decay(self, t) -> float:
        """Relative size of the coefficient spectrum in the top quarter band."""
        worst = 0.0
        top = np.abs(np.fft.fftfreq(self.grid.n)) >= 0.375
        for a in self.coeffs(t):
            ah = np.abs(np.fft.fft(a, axis=-1))
            scale = max(ah.max(), 1e-300)
            worst = max(worst, float(ah[..., top].max() / scale))
        return worst


class _Accumulator:
    """Sums terms that are either Fourier multipliers or physical-space fields."""

    def __init__(self, shape):
        self.hat = np.zeros(shape, dtype=complex)
        self.phys = np.zeros(shape, dtype=complex)

    def add(self, q: _Quantised, t, coef, vh) -> None:
        if q.identically_zero or np.all(np.asarray(coef) == 0):
            return
        h, p = q.apply_hat(t, vh)
        if p is None:
            self.hat = self.hat + coef * h
        else:
            self.phys = self.phys + coef * p

    def result(self):
        return np.fft.ifft(self.hat, axis=-1) + self.phys


class GridOperator:
    """The scaled operator of a ``ReducedOperator`` realised on a grid.

    Every method accepts a scalar time with ``(n,)`` fields or a time array
    of length ``m`` with ``(m, n)`` stacks.
    """

    def __init__(self, r: ReducedOperator, grid: Grid1D, T: float | None = None) -> None:
        self.r = r
        self.grid = grid
        self.T = float(r.domain.T if T is None else T)
        self.q = {name: _Quantised(r.field(name), grid, self.T)
                  for name in ("a2", "alpha", "b3", "b2", "b1", "b0", "c1", "c0", "d0")}
        self.pre = {name: r.pre(name) for name in self.q}
        self.status = self._resolution_status()

    def _resolution_status(self) -> str:
        live = [q for q in self.q.values() if not q.identically_zero]
        worst = max((q.spectrum_decay(t) for q in live for t in (0.0, self.T)), default=0.0)
        self.coefficient_tail = worst
        return "resolved" if worst < RESOLVED_TOL else "unresolved"

    @property
    def x_independent(self) -> bool:
        return all(q.x_independent for q in self.q.values())

    def _acc(self, t, vh) -> _Accumulator:
        return _Accumulator(np.broadcast_shapes(vh.shape, _col(t).shape[:-1] + (self.grid.n,)))

    def apply_A(self, t, v, frozen: bool = False):
        """``(t a2 + eps^(-2/3) alpha) v``; ``frozen`` evaluates ``a2`` at time 0."""
        vh = np.fft.fft(np.asarray(v, dtype=complex), axis=-1)
        acc = self._acc(t, vh)
        ta = np.zeros_like(np.asarray(t, dtype=float)) if frozen else t
        acc.add(self.q["a2"], ta, _col(t), vh)
        acc.add(self.q["alpha"], t, self.pre["alpha"], vh)
        return acc.result()

    def apply_b3(self, t, v):
        return self.q["b3"].apply(t, np.asarray(v, dtype=complex))

    def remainder(self, t, u, du, d2u):
        """Every term of ``P u`` except ``i u'''``."""
        src = tuple(np.fft.fft(np.asarray(v, dtype=complex), axis=-1) for v in (u, du, d2u))
        tc = _col(t)
        acc = self._acc(t, src[0])
        acc.add(self.q["a2"], t, 1j * tc, src[1])
        acc.add(self.q["alpha"], t, 1j * self.pre["alpha"], src[1])
        for name, key, order, fac in _TERMS:
            coef = self.pre[key] * (tc * tc if fac is None else fac)
            acc.add(self.q[name], t, coef, src[order])
        return acc.result()

    def apply_P(self, t, u, du, d2u, d3u):
        return 1j * np.asarray(d3u) + self.remainder(t, u, du, d2u)

    def closure(self, t, u, du, d2u, F):
        """Third time derivative solved from ``P u = F``."""
        return -1j * (np.asarray(F) - self.remainder(t, u, du, d2u))

    def root_bound(self, t_samples: Sequence[float] | None = None) -> float:
        """Fujiwara bound on the frozen characteristic roots over the grid.

        Writing the frozen equation as ``d3 = k2 d2 + k1 d1 + k0 d0`` the roots
        obey ``|tau| <= 2 max(|k2|, |k1|^(1/2), |k0/2|^(1/3))``; for the pure
        second-order term this is ``2 max|xi| sqrt(max A)``.
        """
        ts = np.linspace(0.0, self.T, 9) if t_samples is None else np.asarray(t_samples)
        ximax = np.abs(self.grid.xi).max()
        best = 0.0
        for t in ts:
            sz = {}
            for name, q in self.q.items():
                if not q.identically_zero:
                    ap, am = q.coeffs(t)
                    sz[name] = max(np.abs(ap).max(), np.abs(am).max()) * ximax ** q.deg
            get = lambda n: sz.get(n, 0.0)
            k2 = self.pre["b0"] * get("b0")
            k1 = (t * get("a2") + self.pre["alpha"] * get("alpha") + self.pre["b1"] * get("b1")
                  + self.pre["c0"] * get("c0"))
            k0 = (get("b2") + self.pre["b3"] * t * t * get("b3") + self.pre["c1"] * get("c1")
                  + self.pre["d0"] * get("d0"))
            best = max(best, 2 * max(k2, np.sqrt(k1), (k0 / 2) ** (1 / 3)))
        return best


def apply_P(op: GridOperator, s: State, d3u=None, F=None) -> np.ndarray:
    """``P u`` at a state; without ``d3u`` the top derivative comes from ``P u = F``."""
    if d3u is None:
        if F is None:
            raise ValueError("need either the third derivative or the forcing")
        return np.asarray(F, dtype=complex).copy()
    return op.apply_P(s.t, s.u, s.du, s.d2u, d3u)


# -- Cauchy solver ------------------------------------------------------------------

def cfl_step(op: GridOperator, c_cfl: float = 0.5) -> float:
    b = op.root_bound()
    return np.inf if b == 0 else c_cfl / b


def solve_cauchy(op: GridOperator, data: State, forcing: Callable[[float], np.ndarray] | None,
                 t_end: float, steps: int | None = None, c_cfl: float = 0.5,
                 check_cfl: bool = True) -> Trajectory:
    """Classical RK4 for ``(u, u', u'')`` from ``data.t`` to ``t_end`` (either direction)."""
    grid = op.grid
    t0 = float(data.t)
    span = float(t_end) - t0
    if span == 0:
        raise ValueError("empty time range")
    hmax = cfl_step(op, c_cfl)
    if steps is None:
        steps = max(1, int(np.ceil(abs(span) / min(hmax, abs(span)))))
    h = span / steps
    if check_cfl and abs(h) > hmax * (1 + 1e-12):
        raise CFLError(f"|h| = {abs(h):.3g} exceeds the bound {hmax:.3g}")
    n = grid.n
    zero = np.zeros(n, dtype=complex)
    F = (lambda t: zero) if forcing is None else (lambda t: np.asarray(forcing(t), dtype=complex))

    def rhs(t, Y):
        return np.stack([Y[1], Y[2], op.closure(t, Y[0], Y[1], Y[2], F(t))])

    ts = t0 + h * np.arange(steps + 1)
    ts[-1] = t_end
    out = np.zeros((4, steps + 1, n), dtype=complex)
    frc = np.zeros((steps + 1, n), dtype=complex)
    Y = np.stack([data.u, data.du, data.d2u]).astype(complex)
    for i, t in enumerate(ts):
        Fi = F(t)
        frc[i] = Fi
        out[:3, i] = Y
        out[3, i] = op.closure(t, Y[0], Y[1], Y[2], Fi)
        if i == steps:
            break
        k1 = rhs(t, Y)
        k2 = rhs(t + h / 2, Y + h / 2 * k1)
        k3 = rhs(t + h / 2, Y + h / 2 * k2)
        k4 = rhs(t + h, Y + h * k3)
        Ynew = Y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        before, after = np.linalg.norm(Y), np.linalg.norm(Ynew)
        if not np.isfinite(after) or (before > 0 and after > GROWTH_LIMIT * before):
            raise InstabilityError(f"norm jumped from {before:.3g} to {after:.3g} at t = {t:.6g}")
        Y = Ynew
    return Trajectory(grid, ts, out[0], out[1], out[2], out[3], frc,
                      {"h": h, "steps": steps, "cfl_bound": hmax, "resolution": op.status})


# -- manufactured solutions ------------------------------------------------------------

@dataclass(frozen=True)
class Manufactured:
    """``u(t, x) = p(t - t0) exp(i nu (t - t0)) G(x)`` with a polynomial ``p``.

    ``G(x) = exp(-(x - x0)^2 / sigma^2 + i kappa x)``; ``p = s^3`` by default so
    that ``u, u', u''`` vanish at ``t0``.
    """
    t0: float = 0.0
    nu: float = 0.0
    sigma: float = 2.0
    x0: float = 0.0
    kappa: float = 0.0
    poly: tuple = (0.0, 0.0, 0.0, 1.0)
    amplitude: complex = 1.0

    def profile(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.exp(-((x - self.x0) / self.sigma) ** 2 + 1j * self.kappa * x)

    def time_derivs(self, t, order: int = 3) -> list:
        """``d^k/dt^k`` of the time factor for ``k = 0..order``."""
        P = np.polynomial.polynomial
        s = np.asarray(t, dtype=float) - self.t0
        c = np.asarray(self.poly, dtype=complex)
        ph = np.exp(1j * self.nu * s)
        out = []
        for _ in range(order + 1):
            out.append(P.polyval(s, c) * ph)
            # (p e^{i nu s})' = (p' + i nu p) e^{i nu s}
            c = P.polyadd(P.polyder(c), 1j * self.nu * c)
        return out

    def derivs(self, grid: Grid1D, t) -> tuple:
        g = self.time_derivs(t)
        G = self.profile(grid.x)
        return tuple(gi * G for gi in g)

    def state(self, grid: Grid1D, t) -> State:
        u, du, d2u, _ = self.derivs(grid, t)
        return State(float(t), u, du, d2u)

    def forcing(self, op: GridOperator) -> Callable[[float], np.ndarray]:
        grid = op.grid

        def F(t):
            u, du, d2u, d3u = self.derivs(grid, t)
            return op.apply_P(t, u, du, d2u, d3u)
        return F

    def trajectory(self, op: GridOperator, ts: Sequence[float]) -> Trajectory:
        ts = np.asarray(ts, dtype=float)
        G = self.profile(op.grid.x)
        u, du, d2u, d3u = (g[:, None] * G for g in self.time_derivs(ts))
        frc = op.apply_P(ts, u, du, d2u, d3u)
        return Trajectory(op.grid, ts, u, du, d2u, d3u, frc, {"source": "manufactured"})


def single_mode(grid: Grid1D, mode: int) -> np.ndarray:
    """``exp(i xi_k x)`` for the ``k``-th grid frequency."""
    return np.exp(1j * grid.xi[mode] * grid.x)


def random_smooth(grid: Grid1D, rng: np.random.Generator, decay: float = 0.5, size: int | None = None):
    """Random field with Gaussian Fourier coefficients damped by ``exp(-decay |xi|)``."""
    shape = (grid.n,) if size is None else (size, grid.n)
    hat = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.exp(-decay * np.abs(grid.xi))
    return np.fft.ifft(hat, axis=-1) * grid.n / np.sqrt(grid.n)
