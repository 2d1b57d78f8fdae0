"""Hamilton map, effective hyperbolicity, subprincipal symbol and the constant Pi.

Phase-space variables are ordered ``z = (t, x, tau, xi)``; the first pair are
positions and the last pair their dual momenta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .reduction import ReducedOperator
from .symbols import CoefficientField, OperatorModel

CRIT_TOL = 1e-8
SPEC_TOL = 1e-7
POS, MOM = slice(0, 2), slice(2, 4)


class NotCriticalError(ValueError):
    """The point is not a critical characteristic point of the symbol."""


class NotEffectiveError(ValueError):
    """No pair of nonzero real eigenvalues where one was required."""


class EigenError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CubicSymbol:
    """``lead*tau^3 + q1 tau^2 + q2 tau + q3`` with second-order part ``p2``.

    ``lead`` is 1 for operators; other values arise only when testing the
    invariance of Pi under ``p -> c p``.
    """
    q: tuple[CoefficientField, CoefficientField, CoefficientField]
    p2: Callable
    lead: float = 1.0

    @classmethod
    def from_model(cls, m: OperatorModel | ReducedOperator) -> "CubicSymbol":
        if isinstance(m, ReducedOperator):
            m = m.to_operator_model()
        return cls((m.q1, m.q2, m.q3), m.p2)

    def scaled(self, c: float) -> "CubicSymbol":
        p2 = self.p2
        return CubicSymbol(tuple(f.scaled(c) for f in self.q), lambda t, x, xi: c * p2(t, x, xi),
                           self.lead * c)

    def coeffs(self):
        # c_j multiplies tau^(3-j)
        return (None,) + self.q

    def value(self, z) -> float:
        t, x, tau, xi = z
        q1, q2, q3 = (float(f(t, x, xi)) for f in self.q)
        return ((self.lead * tau + q1) * tau + q2) * tau + q3

    def gradient(self, z) -> np.ndarray:
        t, x, tau, xi = z
        c = self.coeffs()
        g = np.zeros(4)
        for k, v in ((0, "t"), (1, "x"), (3, "xi")):
            g[k] = sum(float(c[j].partial(v)(t, x, xi)) * tau ** (3 - j) for j in (1, 2, 3))
        g[2] = 3 * self.lead * tau ** 2 + sum(
            (3 - j) * float(c[j](t, x, xi)) * tau ** (2 - j) for j in (1, 2))
        return g

    def hessian(self, z) -> np.ndarray:
        """Exact Hessian from the fields' partial derivatives."""
        t, x, tau, xi = z
        c = self.coeffs()
        names = {0: "t", 1: "x", 3: "xi"}
        H = np.zeros((4, 4))
        for a in (0, 1, 3):
            for b in (0, 1, 3):
                if b < a:
                    continue
                H[a, b] = H[b, a] = sum(
                    float(c[j].partial(names[a], names[b])(t, x, xi)) * tau ** (3 - j) for j in (1, 2, 3))
            H[a, 2] = H[2, a] = sum(
                (3 - j) * float(c[j].partial(names[a])(t, x, xi)) * tau ** (2 - j) for j in (1, 2))
        H[2, 2] = 6 * self.lead * tau + 2 * float(c[1](t, x, xi))
        return H


def _fd_hessian_once(p, z, step):
    H = np.zeros((4, 4))
    e = np.eye(4) * step
    p0 = p(z)
    for a in range(4):
        H[a, a] = (p(z + e[a]) - 2 * p0 + p(z - e[a])) / step[a] ** 2
        for b in range(a + 1, 4):
            H[a, b] = H[b, a] = (p(z + e[a] + e[b]) - p(z + e[a] - e[b])
                                 - p(z - e[a] + e[b]) + p(z - e[a] - e[b])) / (4 * step[a] * step[b])
    return H


def fd_hessian(p: Callable[[np.ndarray], float], z, h: float = 2e-3) -> np.ndarray:
    """Central-difference Hessian with one Richardson step (error O(h^4))."""
    z = np.asarray(z, dtype=float)
    step = h * np.maximum(1.0, np.abs(z))
    return (4.0 * _fd_hessian_once(p, z, step / 2) - _fd_hessian_once(p, z, step)) / 3.0


def fd_gradient(p: Callable[[np.ndarray], float], z, h: float = 1e-5) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    step = h * np.maximum(1.0, np.abs(z))
    return np.array([(p(z + step[a] * np.eye(4)[a]) - p(z - step[a] * np.eye(4)[a])) / (2 * step[a])
                     for a in range(4)])


def hamilton_from_hessian(H: np.ndarray) -> np.ndarray:
    """``F = [[p_xi_x, p_xi_xi], [-p_xx, -p_x_xi]]`` for positions (t, x), momenta (tau, xi)."""
    return np.block([[H[MOM, POS], H[MOM, MOM]], [-H[POS, POS], -H[POS, MOM]]])


@dataclass
class HamiltonMatrix:
    F: np.ndarray
    hessian: np.ndarray
    point: tuple[float, float, float, float]
    method: str

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.F))


def fundamental_matrix(m: OperatorModel | ReducedOperator | CubicSymbol, rho: Sequence[float],
                       method: str = "analytic", crit_tol: float = CRIT_TOL) -> HamiltonMatrix:
    """Hamilton map at a critical characteristic point ``rho = (t, x, tau, xi)``."""
    sym = m if isinstance(m, CubicSymbol) else CubicSymbol.from_model(m)
    z = np.asarray(rho, dtype=float)
    scale = (1.0 + abs(z[3])) ** 3
    val = sym.value(z)
    if abs(val) > crit_tol * scale:
        raise NotCriticalError(f"p3(rho) = {val:.3g}: rho is not characteristic")
    grad = sym.gradient(z) if method == "analytic" else fd_gradient(sym.value, z)
    if np.max(np.abs(grad)) > crit_tol * scale * (1 if method == "analytic" else 1e3):
        k = int(np.argmax(np.abs(grad)))
        raise NotCriticalError(f"d p3/d{'t x tau xi'.split()[k]} = {grad[k]:.3g}: rho is not critical")
    H = sym.hessian(z) if method == "analytic" else fd_hessian(sym.value, z)
    return HamiltonMatrix(hamilton_from_hessian(H), H, tuple(float(v) for v in z), method)


def fundamental_matrix_of(p: Callable[[np.ndarray], float], z, h: float = 2e-3) -> np.ndarray:
    """Hamilton map of an arbitrary smooth function by finite differences."""
    return hamilton_from_hessian(fd_hessian(p, z, h))


@dataclass
class SpectrumReport:
    eigenvalues: list[complex]
    mu: float
    effective: bool
    residual_imag: float
    hyperbolic_structure: bool


def classify(F: HamiltonMatrix | np.ndarray, tol_rel: float = SPEC_TOL) -> SpectrumReport:
    """Eigenvalues of F (LAPACK QR) and the effective-hyperbolicity decision."""
    A = F.F if isinstance(F, HamiltonMatrix) else np.asarray(F, dtype=float)
    if not np.all(np.isfinite(A)):
        raise EigenError(f"non-finite Hamilton matrix:\n{A}")
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigenError(f"eigenvalue iteration failed ({exc}) for\n{A}") from None
    tol = tol_rel * max(np.linalg.norm(A), 1e-300) + 1e-12
    real = np.abs(ev.imag) <= tol
    nonzero_real = ev.real[real & (np.abs(ev.real) > tol)]
    mu = float(np.max(np.abs(nonzero_real))) if nonzero_real.size else 0.0
    effective = (nonzero_real.size == 2 and abs(nonzero_real.sum()) <= tol
                 and abs(abs(nonzero_real[0]) - mu) <= tol)
    others = ev[~(real & (np.abs(ev.real) > tol))] if nonzero_real.size else ev
    residual = float(np.max(np.abs(others.real))) if others.size else 0.0
    return SpectrumReport([complex(v) for v in ev], mu if effective else 0.0, bool(effective),
                          residual, bool(residual <= tol and nonzero_real.size <= 2))


@dataclass
class SubprincipalValue:
    value: complex
    point: tuple[float, float, float, float]


def subprincipal(m: OperatorModel | ReducedOperator | CubicSymbol, rho: Sequence[float],
                 path: str = "auto") -> SubprincipalValue:
    """``p2 + (i/2) sum_j d^2 p3 / dx_j dxi_j`` at a triple point.

    ``path="reduced"`` uses the closed form ``b2 - (i/2) a2`` valid for the
    normal form at ``t = tau = 0``.
    """
    t, x, tau, xi = (float(v) for v in rho)
    if path == "reduced" or (path == "auto" and isinstance(m, ReducedOperator)):
        if not isinstance(m, ReducedOperator):
            raise TypeError("the reduced formula needs a ReducedOperator")
        val = complex(m.b2(t, x, xi)) - 0.5j * float(m.a2(t, x, xi))
        return SubprincipalValue(val, (t, x, tau, xi))
    sym = m if isinstance(m, CubicSymbol) else CubicSymbol.from_model(m)
    H = sym.hessian(np.array([t, x, tau, xi]))
    trace = H[0, 2] + H[1, 3]
    return SubprincipalValue(complex(sym.p2(t, x, xi)) + 0.5j * trace, (t, x, tau, xi))


@dataclass
class PiConstant:
    value: float
    sup_point: tuple[float, float]
    N: int
    N0: int
    ratios: list[tuple[float, float, float]] = field(default_factory=list)


def n_from_pi(Pi: float, N0: int = 4) -> int:
    return int(math.ceil(13.0 * Pi / 2.0 - 1e-12)) + int(N0)


def compute_Pi(m: OperatorModel | ReducedOperator | CubicSymbol, x_samples: Sequence[float],
               xi_samples: Sequence[float] = (-1.0, 1.0), N0: int = 4) -> PiConstant:
    """``Pi = 2/3 + sup |p2'/mu|`` over triple points ``(0, x, 0, xi)``."""
    best, arg, rows = -1.0, (float("nan"), float("nan")), []
    for x in x_samples:
        for xi in xi_samples:
            rho = (0.0, float(x), 0.0, float(xi))
            spec = classify(fundamental_matrix(m, rho))
            if not spec.effective:
                raise NotEffectiveError(f"fundamental matrix at x={x}, xi={xi} has no real pair")
            ratio = abs(subprincipal(m, rho, path="general").value) / spec.mu
            rows.append((float(x), float(xi), ratio))
            if ratio > best:
                best, arg = ratio, (float(x), float(xi))
    if best < 0:
        raise ValueError("empty sample set for Pi")
    Pi = 2.0 / 3.0 + best
    return PiConstant(Pi, arg, n_from_pi(Pi, N0), N0, rows)


@dataclass
class NecessaryReport:
    condition_a: bool | None
    condition_b: bool
    margin_a: float | None
    margin_b: float
    subprincipal: complex
    effective: bool


def necessary_conditions(m: OperatorModel | ReducedOperator | CubicSymbol, rho: Sequence[float],
                         M: float, tol: float = 1e-10) -> NecessaryReport:
    """Levi-type necessary conditions for well-posedness with loss ``M``.

    (a) applies when F has no real eigenvalues: ``Im p' = 0`` and
    ``|Re p'| <= (1/4) sum |mu_j|``.  (b) ``|Im p'| / mu <= 2 n (M + 3)``.
    """
    spec = classify(fundamental_matrix(m, rho))
    pv = subprincipal(m, rho, path="general").value
    n = 1
    if spec.mu == 0.0 and all(abs(e.real) <= tol for e in spec.eigenvalues):
        bound = 0.25 * sum(abs(e) for e in spec.eigenvalues)
        margin_a = min(tol - abs(pv.imag), bound + tol - abs(pv.real))
        cond_a = margin_a >= 0
    else:
        cond_a, margin_a = None, None
    limit = 2 * n * (M + 3)
    if spec.mu > 0:
        ratio = abs(pv.imag) / spec.mu
    else:
        ratio = 0.0 if abs(pv.imag) <= tol else math.inf
    return NecessaryReport(cond_a, ratio <= limit, None if cond_a is None else float(margin_a),
                           float(limit - ratio), pv, spec.effective)


def eigen_distance(a: Sequence[complex], b: Sequence[complex]) -> float:
    """Max eigenvalue mismatch under the best pairing of two spectra."""
    from itertools import permutations
    a, b = np.asarray(a), np.asarray(b)
    return float(min(np.max(np.abs(a - b[list(p)])) for p in permutations(range(len(b)))))


def random_symplectic(rng: np.random.Generator, size: float = 0.5) -> np.ndarray:
    """``expm(J S)`` for a random symmetric ``S``; symplectic for the (t,x|tau,xi) form."""
    from scipy.linalg import expm
    A = rng.normal(size=(4, 4))
    S = size * (A + A.T) / 2
    J = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    return expm(J @ S)
