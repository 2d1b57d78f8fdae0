import numpy as np
import pytest
from hypothesis import given, strategies as st

from effhyp import weights as wt

ts = st.floats(0.0, 10.0)
xis = st.floats(-1e6, 1e6)


def test_weight_spec_validation():
    assert wt.WeightSpec(12).theta == 1 / 3
    for bad in ({"N": 0}, {"N": 4, "eps": 0.0}, {"N": 4, "lam": -1.0}, {"N": 4, "theta": 0.5}):
        with pytest.raises(ValueError):
            wt.WeightSpec(**bad)


def test_f_power_examples():
    assert wt.f_power(12, 0.0, 0.0) == 1.0
    assert wt.f_power(1, 3.0, 0.0) == pytest.approx(0.5, rel=1e-15)
    xi = np.logspace(4, 8, 9)
    slope = np.polyfit(np.log(xi), np.log(wt.f_power(2, 0.0, xi)), 1)[0]
    assert slope == pytest.approx(4 / 3, abs=0.01)


def test_f_power_no_overflow():
    v = wt.f_power(40, 0.0, 1e8)
    assert np.isfinite(v) and v > 1e200
    assert wt.log_f_power(2000, 0.0, 1e8) == pytest.approx(2000 * (2 / 3) * np.log(1e8), rel=1e-10)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        wt.log_f(-0.1, 1.0)


@given(st.floats(-20, 20), st.floats(-20, 20), ts, xis)
def test_power_law(k1, k2, t, xi):
    a = wt.f_power(k1, t, xi) * wt.f_power(k2, t, xi)
    assert a == pytest.approx(wt.f_power(k1 + k2, t, xi), rel=1e-12)


@given(st.floats(0.5, 40), ts, st.floats(1e-6, 1.0), xis)
def test_monotone_in_time(N, t, dt, xi):
    assert wt.f_power(N, t + dt, xi) < wt.f_power(N, t, xi)


def test_cube_bound_examples():
    xi = np.array([0.0, 1.0, 1e3])
    assert np.allclose(wt.cube_bound_margin(0.0, xi), 0.0, atol=1e-15)
    ff = wt.f(3.0, 0.0)
    assert (1.0 + 3.0 * ff ** 2, ff ** 3) == (13.0, 8.0)
    assert wt.cube_bound_margin(3.0, 0.0) == 5.0


@given(ts, xis)
def test_cube_bound_margin_closed_form(t, xi):
    a, b = wt.cube_bound_margin(t, xi), wt.cube_bound_exact(t, xi)
    assert a >= -1e-15
    assert a == pytest.approx(b, rel=1e-9, abs=1e-15 * (1 + t) ** 3)


def test_cube_bound_random_points(rng):
    t = rng.uniform(0, 1, 100_000)
    xi = rng.choice([-1, 1], t.size) * 10 ** rng.uniform(-3, 6, t.size)
    rep = wt.cube_bound_check(t, xi)
    assert rep.violations == [] and rep.n_points == t.size


def test_psi_examples():
    assert -wt.dpsi(1.0, 1.0) == pytest.approx(3 * np.exp(-2.0))
    assert wt.psi(1.0, 1.0) == pytest.approx(np.exp(-2.0))
    assert wt.psi(0.5, 1.0) ** 2 < np.exp(-1.0) / 0.25
    assert wt.psi_inequalities(10.0, [0.01]).passed


@pytest.mark.parametrize("lam", [1.0, 8.0, 64.0])
def test_psi_inequalities(lam):
    rep = wt.psi_inequalities(lam, np.geomspace(1e-6, 1.0, 2001))
    assert rep.passed


def test_psi_derivative_numeric():
    t = np.linspace(0.1, 1.0, 10)
    h = 1e-6
    fd = (wt.psi(t + h, 3.0) - wt.psi(t - h, 3.0)) / (2 * h)
    assert np.allclose(fd, wt.dpsi(t, 3.0), rtol=1e-7)


def test_scalar_weights():
    assert wt.phi_fwd(0.5, 1.0) == pytest.approx(0.5 * np.e)
    assert wt.phi_bwd(0.5, 1.0) == pytest.approx(0.5 / np.e)
    assert wt.planck_h(0.1, 0.0) == pytest.approx(0.1)


def test_weight_bounds(rng):
    t = rng.uniform(0, 1, 10_000)
    xi = rng.normal(0, 100, t.size)
    m = wt.weight_bounds_check(t, xi)
    assert m["upper"] >= -1e-14 and m["lower"] >= 0


@given(st.integers(0, 3), st.floats(1, 40), st.floats(0, 1), st.floats(-50, 50))
def test_derivative_ratios_against_finite_differences(order, N, t, xi):
    if order == 0:
        assert wt.dxi_f_power_ratio(N, 0, t, xi) == 1.0
        return
    h = 1e-3 * (1 + abs(xi))
    lo = lambda s: wt.log_f_power(N, t, s)
    # derivatives of f^-N / f^-N(xi) by central differences of exp(log f^-N(s) - log f^-N(xi))
    g = lambda s: np.exp(lo(s) - lo(xi))
    if order == 1:
        fd = (g(xi + h) - g(xi - h)) / (2 * h)
    elif order == 2:
        fd = (g(xi + h) - 2 + g(xi - h)) / h ** 2
    else:
        fd = (g(xi + 2 * h) - 2 * g(xi + h) + 2 * g(xi - h) - g(xi - 2 * h)) / (2 * h ** 3)
    exact = wt.dxi_f_power_ratio(N, order, t, xi)
    scale = (N / (1 + abs(xi))) ** order
    assert abs(fd - exact) <= 1e-3 * scale


def test_symbol_class_constants():
    c = wt.symbol_class_constants([4, 8, 16, 32])
    assert all(v == pytest.approx(1.0) for v in c[0].values())
    assert max(c[1].values()) <= 2 / 3 + 1e-9
    assert 0.5 <= c[2][8.0] / c[2][32.0] <= 2.0
    # every order stays below the large-N limit (2/3)^a times a modest factor
    for a in (1, 2, 3):
        assert max(c[a].values()) <= 2 * (2 / 3) ** a


def test_symbol_class_order_limit():
    with pytest.raises(ValueError):
        wt.dxi_f_power_ratio(4, 4, 0.0, 1.0)
