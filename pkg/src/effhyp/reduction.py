"""Normal form of the cubic symbol near a triple characteristic.

Pipeline: remove the ``tau^2`` term (characteristic chart), depress the
cubic to ``sigma^3 - r2 sigma + r3``, split ``r2 = alpha + t a2``, extract
``b3 = r3 / t^2`` and finally rescale ``t = eps^(2/3) s``, ``x = eps y``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import expr as ex
from .symbols import (CoefficientField, Domain, ModelError, OperatorModel, LOWER_DEGREES,
                      disc_tol)

# power of eps attached to each term of the scaled operator
EPS_POWERS = {
    "a2": 0.0, "b2": 0.0, "alpha": -2.0 / 3.0, "b3": 1.0 / 3.0, "b1": 1.0 / 3.0,
    "b0": 2.0 / 3.0, "c1": 1.0, "c0": 4.0 / 3.0, "d0": 2.0,
}
LOWER_NAMES = ("b1", "b0", "c1", "c0", "d0")


class HypothesisFailure(ValueError):
    """A structural hypothesis of the normal form does not hold."""


# -- depressed cubic ---------------------------------------------------------

def _field_combo(degree: int, name: str, build_expr, build_fn, *fields: CoefficientField):
    if all(f.expr is not None for f in fields):
        return CoefficientField(degree, expr=build_expr(*(f.expr for f in fields)), name=name)
    return CoefficientField(degree, fn=lambda t, x, xi: build_fn(*(f(t, x, xi) for f in fields)),
                            name=name)


def depress(m: OperatorModel) -> tuple[CoefficientField, CoefficientField]:
    """``(r2, r3)`` with ``p3(tau) = sigma^3 - r2 sigma + r3`` at ``sigma = tau + q1/3``."""
    r2 = _field_combo(
        2, "r2",
        lambda a, b: ex.div(ex.sub(ex.mul(a, a), ex.mul(ex.Num(3.0), b)), ex.Num(3.0)),
        lambda a, b: (a * a - 3.0 * b) / 3.0,
        m.q1, m.q2)
    r3 = _field_combo(
        3, "r3",
        lambda a, b, c: ex.add(ex.sub(c, ex.div(ex.mul(a, b), ex.Num(3.0))),
                               ex.div(ex.mul(ex.Num(2.0), ex.power(a, ex.Num(3.0))), ex.Num(27.0))),
        lambda a, b, c: c - a * b / 3.0 + 2.0 * a ** 3 / 27.0,
        m.q1, m.q2, m.q3)
    return r2, r3


# -- characteristic chart ----------------------------------------------------

@dataclass
class CharacteristicChart:
    """Tabulated solution of ``f_t + alpha(t, x) f_x = 0`` with ``f(0, x) = x``.

    ``y0`` labels characteristics; ``X[n, j]`` is the foot point at ``t[n]``
    of the characteristic starting at ``y0[j]`` and ``dX[n, j]`` its
    derivative in ``y0``.  ``jacobian = 1/dX`` is ``f_x`` along the curve.
    """
    t: np.ndarray
    y0: np.ndarray
    X: np.ndarray
    dX: np.ndarray
    valid_t: float
    status: str
    velocity: CoefficientField

    @property
    def jacobian(self) -> np.ndarray:
        return 1.0 / self.dX

    def forward(self, t, y):
        """Foot point ``x(t; y)`` and ``dx/dy`` by integrating the characteristic."""
        return _integrate_characteristics(self.velocity, np.asarray(y, dtype=float),
                                          np.asarray(t, dtype=float), steps=len(self.t) - 1,
                                          T=float(self.t[-1]))

    def f(self, n: int, x) -> np.ndarray:
        """Chart value ``y = f(t[n], x)`` by monotone inversion of the flow."""
        return PchipInterpolator(self.X[n], self.y0, extrapolate=True)(x)

    def table(self) -> np.ndarray:
        T, Y = np.meshgrid(self.t, self.y0, indexing="ij")
        return np.column_stack([T.ravel(), Y.ravel(), self.X.ravel(), self.jacobian.ravel()])


def _velocity_field(m: OperatorModel) -> CoefficientField:
    # q1 = 3 alpha(t, x) xi for a first-order differential symbol
    q1 = m.q1
    if q1.expr is not None:
        return CoefficientField(0, expr=ex.div(ex.subs(q1.expr, "xi", ex.ONE), ex.Num(3.0)),
                                name="transport_velocity")
    return CoefficientField(0, fn=lambda t, x, xi: q1(t, x, 1.0) / 3.0, name="transport_velocity")


def _integrate_characteristics(vel: CoefficientField, y, t_end, steps: int, T: float):
    # RK4 on dx/dt = v(t, x), dJ/dt = v_x(t, x) J up to each requested time
    t_end = np.broadcast_to(t_end, np.broadcast(y, t_end).shape).astype(float)
    x = np.broadcast_to(y, t_end.shape).astype(float).copy()
    J = np.ones_like(x)
    vx = vel.partial("x")
    n = np.maximum(1, np.ceil(np.abs(t_end) / (T / steps))).astype(int)
    h = t_end / n
    s = np.zeros_like(x)
    one = np.ones_like(x)

    def rhs(s, x, J):
        return vel(s, x, one) * one, vx(s, x, one) * J

    for k in range(int(n.max())):
        live = k < n
        hk = np.where(live, h, 0.0)
        k1x, k1j = rhs(s, x, J)
        k2x, k2j = rhs(s + hk / 2, x + hk / 2 * k1x, J + hk / 2 * k1j)
        k3x, k3j = rhs(s + hk / 2, x + hk / 2 * k2x, J + hk / 2 * k2j)
        k4x, k4j = rhs(s + hk, x + hk * k3x, J + hk * k3j)
        x = x + hk / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        J = J + hk / 6 * (k1j + 2 * k2j + 2 * k3j + k4j)
        s = s + hk
    return x, J


def transport_coords(m: OperatorModel, y_grid: Sequence[float], T: float | None = None,
                     steps: int = 512, jac_min: float = 0.1) -> CharacteristicChart:
    """Characteristic chart removing ``q1`` (RK4, ``steps`` time steps)."""
    if m.q1.degree != 1:
        raise ModelError("q1 must be homogeneous of degree 1")
    T = m.domain.T if T is None else T
    vel = _velocity_field(m)
    y0 = np.asarray(y_grid, dtype=float)
    t = np.linspace(0.0, T, steps + 1)
    X = np.empty((steps + 1, y0.size))
    dX = np.empty_like(X)
    X[0], dX[0] = y0, 1.0
    if m.q1.is_zero:
        X[:] = y0
        dX[:] = 1.0
        return CharacteristicChart(t, y0, X, dX, T, "ok", vel)
    h = T / steps
    vx = vel.partial("x")
    x, J = y0.copy(), np.ones_like(y0)
    valid_t, status = T, "ok"
    for n in range(steps):
        s = t[n]

        def rhs(s, x, J):
            return np.broadcast_to(vel(s, x, 1.0), x.shape), vx(s, x, 1.0) * J
        k1x, k1j = rhs(s, x, J)
        k2x, k2j = rhs(s + h / 2, x + h / 2 * k1x, J + h / 2 * k1j)
        k3x, k3j = rhs(s + h / 2, x + h / 2 * k2x, J + h / 2 * k2j)
        k4x, k4j = rhs(s + h, x + h * k3x, J + h * k3j)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        J = J + h / 6 * (k1j + 2 * k2j + 2 * k3j + k4j)
        X[n + 1], dX[n + 1] = x, J
        jac = 1.0 / J
        if status == "ok" and (np.any(~np.isfinite(jac)) or np.any(np.abs(jac) < jac_min)
                               or np.any(np.abs(jac) > 1.0 / jac_min)):
            valid_t, status = s, "truncated"
    if status != "ok":
        warnings.warn(f"characteristic chart degenerates; valid up to t={valid_t:.4g}")
    return CharacteristicChart(t, y0, X, dX, valid_t, status, vel)


def transport_residual(chart: CharacteristicChart, x_grid: Sequence[float]) -> float:
    """Sup of ``|f_t + alpha f_x|`` by centred differences on the chart grid.

    This is the pulled-back ``q1/3`` at unit frequency; it vanishes up to the
    O(h^2) error of the differencing.
    """
    x = np.asarray(x_grid, dtype=float)
    F = np.array([chart.f(n, x) for n in range(len(chart.t))])
    dt = chart.t[1] - chart.t[0]
    dx = x[1] - x[0]
    ft = (F[2:, 1:-1] - F[:-2, 1:-1]) / (2 * dt)
    fx = (F[1:-1, 2:] - F[1:-1, :-2]) / (2 * dx)
    tt, xx = np.meshgrid(chart.t[1:-1], x[1:-1], indexing="ij")
    a = np.broadcast_to(chart.velocity(tt, xx, 1.0), tt.shape)
    keep = tt <= chart.valid_t
    return float(np.max(np.abs(ft + a * fx)[keep]))


def pullback(m: OperatorModel, chart: CharacteristicChart) -> OperatorModel:
    """The principal symbol in chart coordinates ``(t, y, sigma, eta)``.

    With ``x = x(t, y)`` and ``xi = f_x eta`` the new symbol is
    ``sigma^3 - r2(t, x, xi) sigma + r3(t, x, xi)``: the quadratic term is
    gone and ``tau = sigma - q1(t, x, xi)/3``.
    """
    r2, r3 = depress(m)

    def mapped(f):
        def g(t, y, eta):
            x, dX = chart.forward(t, y)
            return f(t, x, np.asarray(eta) / dX)
        return g
    zero = CoefficientField.zero(1, "q1")
    return OperatorModel(zero, CoefficientField(2, fn=lambda t, y, e: -mapped(r2)(t, y, e), name="q2"),
                         CoefficientField(3, fn=mapped(r3), name="q3"),
                         CoefficientField(2, fn=mapped(m.p2_re), name="p2_re"),
                         CoefficientField(2, fn=mapped(m.p2_im), name="p2_im"),
                         {}, m.domain)


# -- split and b3 ------------------------------------------------------------

@dataclass
class SplitResult:
    alpha: CoefficientField
    a2: CoefficientField
    delta: float
    elliptic: bool
    status: str


def _one_sided_d1(fn, x, xi, h):
    return (-3.0 * fn(0.0, x, xi) + 4.0 * fn(h, x, xi) - fn(2 * h, x, xi)) / (2 * h)


def _one_sided_d2(fn, x, xi, h):
    return (2.0 * fn(0.0, x, xi) - 5.0 * fn(h, x, xi) + 4.0 * fn(2 * h, x, xi)
            - fn(3 * h, x, xi)) / h ** 2


def split_r2(r2: CoefficientField, domain: Domain, x_samples: Sequence[float] | None = None,
             t_samples: Sequence[float] | None = None) -> SplitResult:
    """``alpha = r2(0, x, xi)`` and ``a2 = (r2 - alpha)/t`` with its t -> 0 limit."""
    xs = np.linspace(*domain.X, 41) if x_samples is None else np.asarray(x_samples, dtype=float)
    ts = np.linspace(0.0, domain.T, 33) if t_samples is None else np.asarray(t_samples, dtype=float)
    for xi in (-1.0, 1.0):
        low = np.min(r2(0.0, xs, xi))
        if low < -disc_tol(xi, 2):
            raise HypothesisFailure(f"r2(0, x, xi) = {low:.3g} < 0: not hyperbolic near t = 0")
    h = 1e-4 * domain.T
    if r2.expr is not None:
        alpha_node = ex.subs(r2.expr, "t", ex.ZERO)
        alpha = CoefficientField(2, expr=alpha_node, name="alpha")
        a2 = CoefficientField(2, expr=ex.tdiv(ex.sub(r2.expr, alpha_node), 1), name="a2")
    else:
        alpha = CoefficientField(2, fn=lambda t, x, xi: r2(0.0, x, xi) * np.ones_like(np.asarray(t, float)),
                                 name="alpha")

        def a2_fn(t, x, xi):
            t = np.asarray(t, dtype=float)
            far = np.maximum(t, h)
            q_far = (r2(far, x, xi) - r2(0.0, x, xi)) / far
            q0 = _one_sided_d1(r2, x, xi, h)
            w = np.clip(t / h, 0.0, 1.0)
            return np.where(t >= h, q_far, (1 - w) * q0 + w * q_far)
        a2 = CoefficientField(2, fn=a2_fn, name="a2")
    T, Xg = np.meshgrid(ts, xs, indexing="ij")
    delta = float(min(np.min(a2(T, Xg, xi)) for xi in (-1.0, 1.0)))
    elliptic = delta > 0
    return SplitResult(alpha, a2, delta, elliptic, "ok" if elliptic else "H1-failure: a2 not elliptic")


@dataclass
class B3Result:
    h2_pass: bool
    b3: CoefficientField | None
    max_r3_at_0: float
    max_dt_r3_at_0: float


def extract_b3(r3: CoefficientField, x_grid: Sequence[float], domain: Domain,
               tol: float = 1e-7) -> B3Result:
    """Check ``r3 = dt r3 = 0`` at ``t = 0`` and return ``b3 = r3 / t^2``."""
    xs = np.asarray(x_grid, dtype=float)
    h = 1e-4 * domain.T
    v0 = max(float(np.max(np.abs(r3(0.0, xs, xi)))) for xi in (-1.0, 1.0))
    if r3.expr is not None:
        d = r3.partial("t")
        d1 = max(float(np.max(np.abs(d(0.0, xs, xi)))) for xi in (-1.0, 1.0))
    else:
        d1 = max(float(np.max(np.abs(_one_sided_d1(r3, xs, xi, h)))) for xi in (-1.0, 1.0))
    ok = v0 <= tol * disc_tol(1.0, 3, 1.0) and d1 <= tol * disc_tol(1.0, 3, 1.0) * 10
    if not ok:
        return B3Result(False, None, v0, d1)
    if r3.expr is not None:
        b3 = CoefficientField(3, expr=ex.tdiv(r3.expr, 2), name="b3")
    else:
        def b3_fn(t, x, xi):
            t = np.asarray(t, dtype=float)
            far = np.maximum(t, 2 * h)
            q_far = r3(far, x, xi) / far ** 2
            q0 = 0.5 * _one_sided_d2(r3, x, xi, h)
            w = np.clip(t / (2 * h), 0.0, 1.0)
            return np.where(t >= 2 * h, q_far, (1 - w) * q0 + w * q_far)
        b3 = CoefficientField(3, fn=b3_fn, name="b3")
    return B3Result(True, b3, v0, d1)


@dataclass
class AlphaReport:
    passed: bool
    gradient: float
    hessian: dict[float, float]
    status: str


def verify_alpha_degenerate(alpha: CoefficientField, x0: float = 0.0,
                            xi_samples: Sequence[float] = (-1.0, 1.0), radius: float = 0.5,
                            tol: float = 1e-7) -> AlphaReport:
    """Vanishing gradient and nonnegative x-Hessian of ``alpha`` at ``x0``."""
    xs = np.linspace(x0 - radius, x0 + radius, 201)
    for xi in xi_samples:
        vals = np.asarray(alpha(0.0, xs, xi))
        if np.min(vals) < -tol:
            raise ValueError(f"alpha takes negative value {np.min(vals):.3g} near x0 (xi={xi})")
        if abs(float(alpha(0.0, x0, xi))) > tol:
            raise ValueError(f"alpha(x0, xi={xi}) = {float(alpha(0.0, x0, xi)):.3g} is not zero")
    ax, axx = alpha.partial("x"), alpha.partial("x", "x")
    grad = max(abs(float(ax(0.0, x0, xi))) for xi in xi_samples)
    hess = {float(xi): float(axx(0.0, x0, xi)) for xi in xi_samples}
    passed = grad <= 1e-5 and min(hess.values()) >= -1e-5
    status = "ok" if passed else ("modeling error: nonzero gradient" if grad > 1e-5
                                  else "modeling error: indefinite Hessian")
    return AlphaReport(passed, grad, hess, status)


# -- reduced operator ---------------------------------------------------------

@dataclass
class ReducedOperator:
    """Normal-form data ``a2, alpha, b3, b2`` and optional lower-order symbols.

    ``prefactor`` holds the power of eps attached to each term of the scaled
    operator; all entries equal 1 before scaling.
    """
    a2: CoefficientField
    alpha: CoefficientField
    b3: CoefficientField
    b2: CoefficientField
    lower: dict[str, CoefficientField] = field(default_factory=dict)
    eps: float = 1.0
    delta: float = float("nan")
    domain: Domain = field(default_factory=Domain)
    provenance: dict = field(default_factory=dict)

    def pre(self, name: str) -> float:
        return self.eps ** EPS_POWERS[name]

    def A(self, t, x, xi):
        """Coefficient of ``-D_t`` in the principal part: ``t a2 + eps^(-2/3) alpha``."""
        return np.asarray(t) * self.a2(t, x, xi) + self.pre("alpha") * self.alpha(t, x, xi)

    def principal(self, t, x, tau, xi):
        return tau ** 3 - self.A(t, x, xi) * tau + self.pre("b3") * np.asarray(t) ** 2 * self.b3(t, x, xi)

    def field(self, name: str) -> CoefficientField:
        if name in ("a2", "alpha", "b3", "b2"):
            return getattr(self, name)
        return self.lower.get(name) or CoefficientField.zero(LOWER_DEGREES[name], name)

    def is_x_independent(self, xs: Sequence[float] | None = None) -> bool:
        xs = np.linspace(-1, 1, 7) if xs is None else np.asarray(xs)
        for f in [self.a2, self.alpha, self.b3, self.b2, *self.lower.values()]:
            for t in (0.0, 0.1):
                for xi in (-1.0, 1.0):
                    v = np.asarray(f(t, xs, xi))
                    if np.ptp(np.real(v)) + np.ptp(np.imag(v)) > 1e-13 * (1 + np.max(np.abs(v))):
                        return False
        return True

    def to_operator_model(self) -> OperatorModel:
        """The scaled operator as a general cubic model (``q1 = 0``)."""
        pa, pb = self.pre("alpha"), self.pre("b3")
        fields = (self.a2, self.alpha, self.b3, self.b2)
        if all(f.expr is not None for f in fields):
            q2 = ex.neg(ex.add(ex.mul(ex.T, self.a2.expr), ex.mul(ex.Num(pa), self.alpha.expr)))
            q3 = ex.mul(ex.Num(pb), ex.mul(ex.power(ex.T, ex.Num(2.0)), self.b3.expr))
            q2f = CoefficientField(2, expr=q2, name="q2")
            q3f = CoefficientField(3, expr=q3, name="q3")
        else:
            q2f = CoefficientField(2, fn=lambda t, x, xi: -self.A(t, x, xi), name="q2")
            q3f = CoefficientField(3, fn=lambda t, x, xi: pb * np.asarray(t) ** 2 * self.b3(t, x, xi),
                                   name="q3")
        b2 = self.b2
        re = CoefficientField(2, fn=lambda t, x, xi: np.real(b2(t, x, xi)), name="p2_re")
        im = CoefficientField(2, fn=lambda t, x, xi: np.imag(b2(t, x, xi)), name="p2_im")
        if b2.expr is not None and not _has_imag(b2.expr):
            re, im = CoefficientField(2, expr=b2.expr, name="p2_re"), CoefficientField.zero(2, "p2_im")
        return OperatorModel(CoefficientField.zero(1, "q1"), q2f, q3f, re, im, dict(self.lower),
                             self.domain)

    def to_dict(self) -> dict:
        out = {"eps": self.eps, "delta": self.delta,
               "domain": {"T": self.domain.T, "X": list(self.domain.X)},
               "provenance": self.provenance}
        for name in ("a2", "alpha", "b3", "b2", *self.lower):
            f = self.field(name)
            out[name] = f.to_json() if f.expr is not None else "<tabulated>"
        return out


def _has_imag(n: ex.Node) -> bool:
    if isinstance(n, ex.Num):
        return isinstance(n.value, complex)
    if isinstance(n, ex.Var):
        return False
    if isinstance(n, (ex.Neg, ex.Call, ex.TDiv)):
        return _has_imag(n.arg)
    return _has_imag(n.left) or _has_imag(n.right)


def reduced_from_dict(doc: Mapping) -> ReducedOperator:
    """Build a reduced operator from ``{"a2": expr, "alpha": expr, "b3": expr, ...}``.

    An optional ``"scale"`` entry applies ``scale_epsilon`` to the result.
    """
    consts = dict(doc.get("constants", {}))

    def fld(name, deg, default="0"):
        return CoefficientField.parse(doc.get(name, default), deg, consts, name)
    if "a2" not in doc:
        raise ModelError("reduced operator needs an 'a2' entry")
    b2 = fld("b2", 2)
    if "b2_im" in doc:
        b2 = CoefficientField(2, expr=ex.add(b2.expr, ex.mul(ex.Num(1j), fld("b2_im", 2).expr)), name="b2")
    lower = {k: fld(k, LOWER_DEGREES[k]) for k in LOWER_NAMES if k in doc}
    dom = doc.get("domain", {})
    domain = Domain(float(dom.get("T", 1.0)), tuple(float(v) for v in dom.get("X", (-1.0, 1.0))))
    r = ReducedOperator(fld("a2", 2), fld("alpha", 2), fld("b3", 3), b2, lower,
                        float(doc.get("eps", 1.0)), domain=domain, provenance={"source": "reduced"})
    xs = np.linspace(*domain.X, 41)
    ts = np.linspace(0.0, domain.T, 17)
    Tg, Xg = np.meshgrid(ts, xs, indexing="ij")
    r.delta = float(min(np.min(r.a2(Tg, Xg, s)) for s in (-1.0, 1.0)))
    if "scale" in doc:
        r = scale_epsilon(r, float(doc["scale"]))
    return r


def reduce_operator(m: OperatorModel, x0: float = 0.0, x_grid: Sequence[float] | None = None) -> ReducedOperator:
    """Full normal-form reduction of a model with a triple point at ``(0, x0)``."""
    xs = np.linspace(*m.domain.X, 41) if x_grid is None else np.asarray(x_grid, dtype=float)
    prov: dict = {"x0": x0}
    work = m
    if not m.q1.is_zero:
        chart = transport_coords(m, xs)
        work = pullback(m, chart)
        prov.update(chart="characteristic", valid_t=chart.valid_t, chart_status=chart.status)
    else:
        prov["chart"] = "identity"
    r2, r3 = depress(work)
    split = split_r2(r2, m.domain, xs)
    if not split.elliptic:
        raise HypothesisFailure(f"a2 is not elliptic (min {split.delta:.3g})")
    b3 = extract_b3(r3, xs, m.domain)
    if not b3.h2_pass:
        raise HypothesisFailure(f"r3 does not vanish to second order at t=0 "
                                f"(|r3|={b3.max_r3_at_0:.3g}, |dt r3|={b3.max_dt_r3_at_0:.3g})")
    if work.p2_re.expr is not None and work.p2_im.expr is not None:
        b2 = CoefficientField(2, expr=ex.add(work.p2_re.expr, ex.mul(ex.Num(1j), work.p2_im.expr))
                              if not work.p2_im.is_zero else work.p2_re.expr, name="b2")
    else:
        b2 = CoefficientField(2, fn=work.p2, name="b2")
    prov["h2"] = "pass"
    return ReducedOperator(split.a2, split.alpha, b3.b3, b2, dict(m.lower), 1.0, split.delta,
                           m.domain, prov)


def scale_epsilon(r: ReducedOperator, eps: float) -> ReducedOperator:
    """Rescale ``t = eps^(2/3) s, x = eps y``; scalings compose multiplicatively."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    ts = eps ** (2.0 / 3.0)

    def sc(f: CoefficientField) -> CoefficientField:
        return f if eps == 1.0 else f.substitute(ts, eps)
    prov = dict(r.provenance)
    prov["scalings"] = list(prov.get("scalings", [])) + [eps]
    return ReducedOperator(sc(r.a2), sc(r.alpha), sc(r.b3), sc(r.b2),
                           {k: sc(v) for k, v in r.lower.items()}, r.eps * eps, r.delta,
                           Domain(r.domain.T / ts, (r.domain.X[0] / eps, r.domain.X[1] / eps)), prov)
