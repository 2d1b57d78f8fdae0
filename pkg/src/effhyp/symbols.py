"""Cubic principal symbols: evaluation, discriminants, roots, hyperbolicity scans.

The principal symbol is ``p3 = tau^3 + q1 tau^2 + q2 tau + q3`` with real
coefficient fields homogeneous in ``xi`` of degrees 1, 2 and 3.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex

TOL_DISC = 1e-10
ROOT_RESIDUAL_TOL = 1e-8
_TINY = 1e-13

LOWER_DEGREES = {"b1": 1, "b0": 0, "c1": 1, "c0": 0, "d0": 0}


class DomainError(ValueError):
    """A point lies outside the configured (t, x) box."""


class ModelError(ValueError):
    """Operator definition is malformed or violates a structural invariant."""


def disc_tol(xi, degree: int = 6, base: float = TOL_DISC):
    """Absolute tolerance for a quantity homogeneous of ``degree`` in xi."""
    return base * (1.0 + np.abs(xi)) ** degree


class CoefficientField:
    """A symbol coefficient ``a(t, x, xi)`` homogeneous of a given degree in xi.

    Built either from an expression tree (exact partials available) or from
    a plain callable (partials by central differences).
    """

    def __init__(self, degree: int, expr: ex.Node | None = None,
                 fn: Callable | None = None, name: str = "") -> None:
        if expr is None and fn is None:
            raise ModelError("a coefficient field needs an expression or a callable")
        self.degree = int(degree)
        self.expr = expr
        self.name = name
        self._fn = ex.compile_expr(expr) if expr is not None else fn

    @classmethod
    def parse(cls, text, degree: int, constants: Mapping[str, float] | None = None,
              name: str = "") -> "CoefficientField":
        return cls(degree, expr=ex.parse(text, constants), name=name)

    @classmethod
    def constant(cls, value, degree: int = 0, name: str = "") -> "CoefficientField":
        node = ex.as_node(value)
        if degree:
            node = ex.mul(node, ex.power(ex.XI, ex.Num(float(degree))))
        return cls(degree, expr=node, name=name)

    @classmethod
    def zero(cls, degree: int, name: str = "") -> "CoefficientField":
        return cls(degree, expr=ex.ZERO, name=name)

    def __call__(self, t, x, xi):
        return self._fn(np.asarray(t, dtype=float), np.asarray(x, dtype=float),
                        np.asarray(xi, dtype=float))

    def __repr__(self) -> str:
        body = ex.to_str(self.expr) if self.expr is not None else "<callable>"
        return f"CoefficientField(deg={self.degree}, {body})"

    @property
    def is_zero(self) -> bool:
        return isinstance(self.expr, ex.Num) and self.expr.value == 0

    def to_json(self) -> str | None:
        return None if self.expr is None else ex.to_str(self.expr)

    def partial(self, *variables: str) -> "CoefficientField":
        """Mixed partial derivative, e.g. ``partial("t", "x")``."""
        deg = self.degree - sum(v == "xi" for v in variables)
        if self.expr is not None:
            node = self.expr
            for v in variables:
                node = ex.diff(node, v)
            return CoefficientField(deg, expr=node, name=f"{self.name}_{''.join(variables)}")
        return CoefficientField(deg, fn=_fd_partial(self._fn, variables),
                                name=f"{self.name}_{''.join(variables)}")

    def substitute(self, t_scale: float = 1.0, x_scale: float = 1.0) -> "CoefficientField":
        """Field ``(t, x, xi) -> a(t_scale*t, x_scale*x, xi)``."""
        if self.expr is not None:
            node = ex.subs(self.expr, "t", ex.mul(ex.Num(t_scale), ex.T))
            node = ex.subs(node, "x", ex.mul(ex.Num(x_scale), ex.X))
            return CoefficientField(self.degree, expr=node, name=self.name)
        fn = self._fn
        return CoefficientField(self.degree, fn=lambda t, x, xi: fn(t_scale * t, x_scale * x, xi),
                                name=self.name)

    def scaled(self, c) -> "CoefficientField":
        if self.expr is not None:
            return CoefficientField(self.degree, expr=ex.mul(ex.as_node(c), self.expr), name=self.name)
        fn = self._fn
        return CoefficientField(self.degree, fn=lambda t, x, xi: c * fn(t, x, xi), name=self.name)

    def check_homogeneity(self, rng: np.random.Generator, box: "Domain", n: int = 100,
                          rtol: float = 1e-9) -> float:
        """Largest relative homogeneity defect over ``n`` random (s, xi) samples."""
        t = rng.uniform(0.0, box.T, n)
        x = rng.uniform(box.X[0], box.X[1], n)
        xi = rng.uniform(0.2, 5.0, n) * rng.choice([-1.0, 1.0], n)
        s = rng.uniform(0.1, 10.0, n)
        lhs = np.asarray(self(t, x, s * xi))
        rhs = s ** self.degree * np.asarray(self(t, x, xi))
        scale = np.maximum(np.abs(lhs), np.abs(rhs))
        err = np.where(scale > 0, np.abs(lhs - rhs) / np.where(scale > 0, scale, 1.0), 0.0)
        return float(np.max(err))


def _fd_partial(fn: Callable, variables: Sequence[str]) -> Callable:
    # first derivatives use a small step, second derivatives a larger one to
    # balance truncation against rounding
    names = ("t", "x", "xi")
    if len(variables) == 1:
        k = names.index(variables[0])

        def d1(t, x, xi):
            args = [np.asarray(a, dtype=float) for a in (t, x, xi)]
            h = 1e-5 * np.maximum(1.0, np.abs(args[k]))
            plus, minus = list(args), list(args)
            plus[k] = args[k] + h
            minus[k] = args[k] - h
            return (fn(*plus) - fn(*minus)) / (2 * h)
        return d1
    if len(variables) == 2:
        i, j = (names.index(v) for v in variables)

        def d2(t, x, xi):
            args = [np.asarray(a, dtype=float) for a in (t, x, xi)]
            hi = 1e-4 * np.maximum(1.0, np.abs(args[i]))
            hj = 1e-4 * np.maximum(1.0, np.abs(args[j]))

            def at(di, dj):
                a = list(args)
                a[i] = a[i] + di
                a[j] = a[j] + dj
                return fn(*a)
            if i == j:
                return (at(hi, 0) - 2 * fn(*args) + at(-hi, 0)) / hi ** 2
            return (at(hi, hj) - at(hi, -hj) - at(-hi, hj) + at(-hi, -hj)) / (4 * hi * hj)
        return d2
    inner = _fd_partial(fn, variables[:2])
    return _fd_partial(inner, variables[2:])


@dataclass(frozen=True)
class Domain:
    T: float = 1.0
    X: tuple[float, float] = (-1.0, 1.0)

    def contains(self, t, x, slack: float = 1e-12) -> bool:
        t, x = np.asarray(t), np.asarray(x)
        return bool(np.all((t >= -slack) & (t <= self.T + slack)
                           & (x >= self.X[0] - slack) & (x <= self.X[1] + slack)))


@dataclass
class OperatorModel:
    """Third-order operator: principal cubic plus lower-order symbols."""
    q1: CoefficientField
    q2: CoefficientField
    q3: CoefficientField
    p2_re: CoefficientField
    p2_im: CoefficientField
    lower: dict[str, CoefficientField] = field(default_factory=dict)
    domain: Domain = field(default_factory=Domain)
    space_dim: int = 1
    source: dict | None = None

    def __post_init__(self) -> None:
        for name, f, d in (("q1", self.q1, 1), ("q2", self.q2, 2), ("q3", self.q3, 3)):
            if f.degree != d:
                raise ModelError(f"{name} must have degree {d}, got {f.degree}")
        if self.space_dim != 1:
            raise ModelError("only one space dimension is supported")

    def q(self, t, x, xi):
        return self.q1(t, x, xi), self.q2(t, x, xi), self.q3(t, x, xi)

    def p2(self, t, x, xi):
        return np.asarray(self.p2_re(t, x, xi)) + 1j * np.asarray(self.p2_im(t, x, xi))

    def p3(self, t, x, tau, xi):
        q1, q2, q3 = self.q(t, x, xi)
        return ((tau + q1) * tau + q2) * tau + q3

    def check_real(self, rng: np.random.Generator, n: int = 200) -> bool:
        t = rng.uniform(0, self.domain.T, n)
        x = rng.uniform(*self.domain.X, n)
        xi = rng.choice([-1.0, 1.0], n)
        return all(not np.iscomplexobj(np.asarray(f(t, x, xi))) or
                   np.allclose(np.imag(f(t, x, xi)), 0) for f in (self.q1, self.q2, self.q3))


def operator_from_dict(doc: Mapping) -> OperatorModel:
    """Build a model from the JSON operator schema (``q1``, ``q2``, ``q3``, ...)."""
    if not isinstance(doc, Mapping):
        raise ModelError("operator definition must be a JSON object")
    consts = dict(doc.get("constants", {}))
    try:
        q1 = CoefficientField.parse(doc.get("q1", 0), 1, consts, "q1")
        q2 = CoefficientField.parse(doc["q2"], 2, consts, "q2")
        q3 = CoefficientField.parse(doc["q3"], 3, consts, "q3")
        p2_re = CoefficientField.parse(doc.get("p2_re", 0), 2, consts, "p2_re")
        p2_im = CoefficientField.parse(doc.get("p2_im", 0), 2, consts, "p2_im")
        lower = {k: CoefficientField.parse(v, LOWER_DEGREES[k], consts, k)
                 for k, v in doc.get("lower", {}).items()}
    except KeyError as exc:
        raise ModelError(f"missing or unknown symbol entry {exc}") from None
    dom = doc.get("domain", {})
    X = tuple(float(v) for v in dom.get("X", (-1.0, 1.0)))
    domain = Domain(float(dom.get("T", 1.0)), X)
    if len(X) != 2 or X[0] >= X[1] or domain.T <= 0:
        raise ModelError(f"invalid domain {dom}")
    return OperatorModel(q1, q2, q3, p2_re, p2_im, lower, domain, source=dict(doc))


def load_operator(path: str | Path) -> OperatorModel:
    return operator_from_dict(json.loads(Path(path).read_text()))


# -- evaluation and discriminants -------------------------------------------

def eval_p3(m: OperatorModel, point: Sequence[float]) -> float:
    """Value of the principal symbol at ``(t, x, tau, xi)``."""
    t, x, tau, xi = point
    if not m.domain.contains(t, x):
        raise DomainError(f"point (t={t}, x={x}) outside domain T={m.domain.T}, X={m.domain.X}")
    return float(np.real(m.p3(t, x, tau, xi)))


@dataclass(frozen=True)
class DiscriminantReport:
    delta0: float
    delta1: float
    delta: float
    triple_root_candidate: float
    classification: str


def cubic_discriminants(q1, q2, q3):
    """(delta0, delta1, delta) for ``tau^3 + q1 tau^2 + q2 tau + q3``."""
    q1, q2, q3 = (np.asarray(v, dtype=float) for v in (q1, q2, q3))
    d0 = q1 * q1 - 3.0 * q2
    d1 = 27.0 * q3 - 9.0 * q1 * q2 + 2.0 * q1 ** 3
    delta = -(d1 * d1 - 4.0 * d0 ** 3) / 27.0
    return d0, d1, delta


def classify_discriminant(delta0, delta, tol0, tol):
    delta0, delta = np.asarray(delta0), np.asarray(delta)
    out = np.where(delta > tol, "simple", "complex_pair").astype(object)
    small = np.abs(delta) <= tol
    out = np.where(small, "double", out)
    out = np.where(small & (np.abs(delta0) <= tol0), "triple", out)
    return out


def discriminants(m: OperatorModel, t: float, x: float, xi: float) -> DiscriminantReport:
    q1, q2, q3 = (float(v) for v in m.q(t, x, xi))
    d0, d1, delta = (float(v) for v in cubic_discriminants(q1, q2, q3))
    cls = classify_discriminant(d0, delta, disc_tol(xi, 2), disc_tol(xi, 6))
    return DiscriminantReport(d0, d1, delta, -q1 / 3.0, str(cls))


# -- roots ------------------------------------------------------------------

@dataclass(frozen=True)
class RootSet:
    roots: tuple[complex, complex, complex]
    all_real: bool
    max_residual: float
    method: str = "cardano"
    imag_consistent: bool = True


def _coeff_scale(q1, q2, q3):
    return 1.0 + np.maximum.reduce([np.abs(q1), np.sqrt(np.abs(q2)), np.cbrt(np.abs(q3))])


def _horner(q1, q2, q3, r):
    return ((r + q1) * r + q2) * r + q3


def _newton_polish(q1, q2, q3, r, iters: int = 3):
    # Accept a Newton step only where it does not increase the residual; near
    # multiple roots plain Newton can wander.
    for _ in range(iters):
        p = _horner(q1, q2, q3, r)
        dp = (3.0 * r + 2.0 * q1) * r + q2
        safe = np.abs(dp) > 1e-300
        step = np.where(safe, p / np.where(safe, dp, 1.0), 0.0)
        cand = r - step
        better = np.abs(_horner(q1, q2, q3, cand)) <= np.abs(p)
        r = np.where(better, cand, r)
    return r


def solve_cubic(q1, q2, q3, tol_scale=None):
    """Vectorised Cardano solver.

    Returns ``(roots, all_real, max_residual, imag_consistent, degenerate)``;
    ``roots`` has a trailing axis of length 3.  ``tol_scale`` is the
    homogeneity scale (``1+|xi|`` for symbols); defaults to the coefficient
    scale.
    """
    q1, q2, q3 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (q1, q2, q3)))
    scale = _coeff_scale(q1, q2, q3) if tol_scale is None else np.broadcast_to(
        np.asarray(tol_scale, dtype=float), q1.shape)
    d0, d1, delta = cubic_discriminants(q1, q2, q3)

    sq = np.sqrt((d1 * d1 - 4.0 * d0 ** 3).astype(complex))
    c_plus = (d1 + sq) / 2.0
    c_minus = (d1 - sq) / 2.0
    c3 = np.where(np.abs(c_plus) >= np.abs(c_minus), c_plus, c_minus)
    C = np.abs(c3) ** (1.0 / 3.0) * np.exp(1j * np.angle(c3) / 3.0)
    degenerate = np.abs(C) <= _TINY * scale
    Csafe = np.where(degenerate, 1.0, C)
    u = np.exp(2j * np.pi * np.arange(3) / 3.0)
    uc = u * Csafe[..., None]
    roots = -(q1[..., None] + uc + d0[..., None] / uc) / 3.0
    roots = np.where(degenerate[..., None], (-q1 / 3.0)[..., None] + 0j, roots)

    tol = disc_tol(scale - 1.0, 6)
    all_real = delta >= -tol
    raw_imag = np.max(np.abs(roots.imag), axis=-1)
    imag_consistent = (raw_imag <= 1e-6 * scale) == all_real

    Q1, Q2, Q3 = q1[..., None], q2[..., None], q3[..., None]
    real_roots = _newton_polish(Q1, Q2, Q3, roots.real)
    # complex-pair case: keep the most nearly real root, deflate, solve the quadratic
    k = np.argmin(np.abs(roots.imag), axis=-1)
    r0 = np.take_along_axis(roots.real, k[..., None], axis=-1)[..., 0]
    r0 = _newton_polish(q1, q2, q3, r0, iters=4)
    b = q1 + r0
    c = q2 + r0 * b
    disc = np.sqrt((b * b - 4.0 * c).astype(complex))
    pair1 = (-b - disc) / 2.0
    pair2 = (-b + disc) / 2.0
    complex_roots = np.stack([r0 + 0j, pair1, pair2], axis=-1)

    # inside the tolerance band a visible imaginary part means the pair is
    # genuinely complex; projecting it onto the real axis would lose it
    take_real = all_real & (raw_imag <= 1e-6 * scale)
    out = np.where(take_real[..., None], real_roots + 0j, complex_roots)
    out = np.where(degenerate[..., None], (-q1 / 3.0)[..., None] + 0j, out)
    # normwise backward error; the componentwise one is meaningless at roots near 0
    denom = (1.0 + np.abs(Q1) + np.abs(Q2) + np.abs(Q3)) * (1.0 + np.abs(out)) ** 3
    resid = np.abs(_horner(Q1, Q2, Q3, out)) / denom
    return out, all_real, np.max(resid, axis=-1), imag_consistent, degenerate


def roots(m: OperatorModel, t: float, x: float, xi: float) -> RootSet:
    q1, q2, q3 = (float(v) for v in m.q(t, x, xi))
    return roots_of(q1, q2, q3, tol_scale=1.0 + abs(xi))


def roots_of(q1: float, q2: float, q3: float, tol_scale: float | None = None) -> RootSet:
    r, real, resid, consistent, degenerate = solve_cubic(q1, q2, q3, tol_scale)
    method = "triple_closed_form" if bool(degenerate) else (
        "cardano" if bool(real) else "cardano_deflated")
    return RootSet(tuple(complex(v) for v in r), bool(real), float(resid), method, bool(consistent))


def companion_roots(q1, q2, q3) -> np.ndarray:
    """Oracle: eigenvalues of the companion matrix (numpy LAPACK)."""
    q1, q2, q3 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (q1, q2, q3)))
    comp = np.zeros(q1.shape + (3, 3))
    comp[..., 0, :] = -np.stack([q1, q2, q3], axis=-1)
    comp[..., 1, 0] = 1.0
    comp[..., 2, 1] = 1.0
    return np.linalg.eigvals(comp)


def match_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Max distance between two root triples under the best pairing."""
    best = None
    for perm in permutations(range(3)):
        d = np.max(np.abs(a - b[..., list(perm)]), axis=-1)
        best = d if best is None else np.minimum(best, d)
    return best


# -- scans ------------------------------------------------------------------

@dataclass
class HyperbolicityReport:
    passed: bool
    min_delta: float
    argmin: tuple[float, float, float]
    violations: list[tuple[float, float, float, float]]
    n_points: int


def scan_hyperbolicity(m: OperatorModel, t_grid: Sequence[float], x_grid: Sequence[float],
                       xi_samples: Sequence[float] = (-1.0, 1.0)) -> HyperbolicityReport:
    """Check that all roots are real (Delta >= -tol) over a (t, x, xi) grid."""
    t_grid, x_grid, xi_s = (np.atleast_1d(np.asarray(g, dtype=float)) for g in (t_grid, x_grid, xi_samples))
    if t_grid.size == 0 or x_grid.size == 0 or xi_s.size == 0:
        raise ValueError("empty hyperbolicity grid")
    T, Xg, XI = np.meshgrid(t_grid, x_grid, xi_s, indexing="ij")
    _, _, delta = cubic_discriminants(*m.q(T, Xg, XI))
    tol = disc_tol(XI, 6)
    bad = delta < -tol
    k = int(np.argmin(delta))
    viol = [(float(T.flat[i]), float(Xg.flat[i]), float(XI.flat[i]), float(delta.flat[i]))
            for i in np.flatnonzero(bad)]
    return HyperbolicityReport(not viol, float(delta.flat[k]),
                               (float(T.flat[k]), float(Xg.flat[k]), float(XI.flat[k])),
                               viol, int(delta.size))


@dataclass
class TripleLocus:
    points: list[tuple[float, dict[float, float]]]
    h1_violations: list[float]


def detect_triple_locus(m: OperatorModel, x_grid: Sequence[float],
                        xi_samples: Sequence[float] = (-1.0, 1.0)) -> TripleLocus:
    """Points ``x`` with a triple root at ``t = 0`` for every sampled xi."""
    points, flagged = [], []
    for x in np.atleast_1d(np.asarray(x_grid, dtype=float)):
        lams, hits = {}, []
        for xi in xi_samples:
            rep = discriminants(m, 0.0, float(x), float(xi))
            hits.append(rep.classification == "triple")
            lams[float(xi)] = rep.triple_root_candidate
        if all(hits):
            points.append((float(x), lams))
        elif any(hits):
            flagged.append(float(x))
    return TripleLocus(points, flagged)
