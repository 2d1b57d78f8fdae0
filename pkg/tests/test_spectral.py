import numpy as np
import pytest
from hypothesis import given, strategies as st

from effhyp import freqlab as fl
from effhyp import models
from effhyp import reduction as rd
from effhyp import spectral as sp

GRID = sp.Grid1D(32, 2 * np.pi)


def const_op(doc, grid=GRID, T=0.25):
    return sp.GridOperator(rd.reduced_from_dict(doc), grid, T=T)


def demo_op(n=64):
    return sp.GridOperator(rd.reduced_from_dict(models.get("demo-scaled")), sp.Grid1D(n), T=models.SCALED_T)


def test_grid_validation():
    for n in (8, 48):
        with pytest.raises(ValueError):
            sp.Grid1D(n)
    with pytest.raises(ValueError):
        sp.Grid1D(32, -1.0)
    g = sp.Grid1D(16, 2 * np.pi)
    assert np.allclose(np.sort(g.xi), np.arange(-8, 8))
    assert g.weight == pytest.approx(2 * np.pi / 16)


def test_multiplier_examples():
    v = sp.single_mode(GRID, 5)
    assert np.allclose(sp.multiplier(np.ones(GRID.n), v), v, atol=1e-14)
    out = sp.multiplier(lambda xi: 1 + xi ** 2, v, GRID)
    assert np.allclose(out, 26 * v, atol=1e-12)
    with pytest.raises(ValueError):
        sp.multiplier(lambda xi: xi, v)
    with pytest.raises(FloatingPointError):
        sp.multiplier(np.full(GRID.n, np.nan), v)


def test_sobolev_norm_examples():
    L = GRID.L
    assert sp.sobolev_norm(np.ones(GRID.n), 3.0, GRID) == pytest.approx(np.sqrt(L))
    v = sp.single_mode(GRID, 4)
    assert sp.sobolev_norm(v, 2.0, GRID) == pytest.approx(np.sqrt(L) * 17)


@given(st.floats(-2, 3))
def test_norm_row_helpers_agree(s):
    rng = np.random.default_rng(1)
    V = sp.random_smooth(GRID, rng, size=4)
    assert np.allclose(sp.sobolev_norms(V, s, GRID), [sp.sobolev_norm(v, s, GRID) for v in V])
    assert np.allclose(sp.inner(V, V, GRID).real, sp.sobolev_norms(V, 0, GRID) ** 2)


def test_field_value_semantics():
    a = sp.Field(GRID, np.ones(GRID.n))
    b = a * 2.0
    b.values[0] = 0
    assert a.values[0] == 1
    assert np.allclose(sp.Field.from_hat(GRID, a.hat).values, a.values)
    with pytest.raises(ValueError):
        sp.Field(GRID, np.ones(3))


def test_apply_P_diagonal_oracle():
    op = const_op({"a2": "xi^2"})
    k = 3
    xi0 = GRID.xi[k]
    e = sp.single_mode(GRID, k)
    t = 0.2
    g, g1, g2, g3 = 0.3 + 0.1j, -1.2, 0.4j, 2.0
    Pu = op.apply_P(t, g * e, g1 * e, g2 * e, g3 * e)
    assert np.allclose(Pu, (1j * g3 + 1j * t * xi0 ** 2 * g1) * e, atol=1e-12)


def test_apply_P_state_and_zero():
    op = demo_op()
    z = sp.State.zero(op.grid, 0.1)
    assert np.all(sp.apply_P(op, z, d3u=np.zeros(op.grid.n)) == 0)
    F = np.arange(op.grid.n, dtype=complex)
    assert np.array_equal(sp.apply_P(op, z, F=F), F)
    with pytest.raises(ValueError):
        sp.apply_P(op, z)


def test_apply_P_vectorised_in_time(rng):
    op = demo_op()
    ts = np.array([0.0, 0.1, 0.2])
    U = [sp.random_smooth(op.grid, rng, size=3) for _ in range(4)]
    stacked = op.apply_P(ts, *U)
    for i, t in enumerate(ts):
        assert np.allclose(stacked[i], op.apply_P(t, *(u[i] for u in U)), atol=1e-12)


def test_zero_data_zero_trajectory():
    op = demo_op()
    tr = sp.solve_cauchy(op, sp.State.zero(op.grid, 0.0), None, op.T, steps=20)
    assert np.all(tr.u == 0) and tr.u.shape == (21, op.grid.n)


def test_cfl_guard():
    op = demo_op(128)
    with pytest.raises(sp.CFLError):
        sp.solve_cauchy(op, sp.State.zero(op.grid, 0.0), None, op.T, steps=2)
    assert sp.cfl_step(op) > 0


def test_instability_detector():
    # one RK4 step with |h tau| ~ 500 amplifies by ~ (h tau)^4 / 24
    op = const_op(models.get("hyperbolic"), sp.Grid1D(256, 2 * np.pi), T=4.0)
    rng = np.random.default_rng(0)
    data = sp.State(0.0, *(sp.random_smooth(op.grid, rng, decay=0.0) for _ in range(3)))
    with pytest.raises(sp.InstabilityError):
        sp.solve_cauchy(op, data, None, 4.0, steps=1, check_cfl=False)


def manufactured_error(op, steps):
    ms = sp.Manufactured(nu=1.5, sigma=1.5, kappa=0.5, poly=(0.2, 0.0, 0.5, 1.0))
    tr = sp.solve_cauchy(op, ms.state(op.grid, 0.0), ms.forcing(op), op.T, steps=steps)
    exact = ms.derivs(op.grid, op.T)[0]
    return sp.sobolev_norm(tr.u[-1] - exact, 0.0, op.grid)


def test_manufactured_convergence_order():
    op = demo_op()
    steps = np.array([50, 100, 200])
    err = np.array([manufactured_error(op, s) for s in steps])
    order = -np.polyfit(np.log(steps), np.log(err), 1)[0]
    assert order >= 3.7


def test_manufactured_traces_vanish():
    op = demo_op()
    ms = sp.Manufactured(t0=0.1, nu=2.0)
    tr = ms.trajectory(op, np.linspace(0.1, 0.3, 5))
    assert np.all(tr.u[0] == 0) and np.all(tr.du[0] == 0) and np.all(tr.d2u[0] == 0)
    assert np.allclose(tr.forcing[2], ms.forcing(op)(0.2))


def test_single_mode_matches_per_frequency_oracle():
    r = rd.reduced_from_dict({"a2": "xi^2", "b3": "xi^3", "b2": "0.5*xi^2", "domain": {"T": 0.25}})
    op = sp.GridOperator(r, GRID, T=0.25)
    assert op.x_independent and op.status == "resolved"
    k = 3
    xi = GRID.xi[k]
    e = sp.single_mode(GRID, k)
    u0, du0, d2u0 = 1.0, 0.5j, -0.3
    tr = sp.solve_cauchy(op, sp.State(0.0, u0 * e, du0 * e, d2u0 * e), None, 0.25, steps=250)
    s = np.sqrt(1 + xi ** 2)
    res = fl.per_frequency_solve(r, xi, T=0.25, data=np.array([u0, du0 / s, d2u0 / s ** 2]))
    assert np.max(np.abs(tr.u[-1] - res.final[0, 0] * e)) < 1e-7


def test_backward_solve_recovers_data():
    op = demo_op()
    ms = sp.Manufactured(nu=1.0, sigma=1.5, poly=(1.0, 0.3, 0.0, 0.2))
    fwd = sp.solve_cauchy(op, ms.state(op.grid, 0.0), ms.forcing(op), op.T, steps=200)
    back = sp.solve_cauchy(op, fwd.state(len(fwd) - 1), ms.forcing(op), 0.0, steps=200)
    assert np.max(np.abs(back.u[-1] - ms.state(op.grid, 0.0).u)) < 1e-8


def test_trajectory_csv(tmp_path):
    op = demo_op()
    tr = sp.Manufactured().trajectory(op, np.linspace(0, 0.2, 3))
    tr.to_csv(tmp_path / "u.csv")
    tr.spectrum_csv(tmp_path / "s.csv")
    assert len((tmp_path / "u.csv").read_text().splitlines()) == 1 + 3 * op.grid.n
    assert (tmp_path / "s.csv").read_text().startswith("t,xi,abs_uhat")


def test_random_smooth_decay(rng):
    v = sp.random_smooth(GRID, rng, decay=1.0, size=200)
    power = np.mean(np.abs(np.fft.fft(v, axis=-1)) ** 2, axis=0)
    xi = np.abs(GRID.xi)
    slope = np.polyfit(xi[xi > 0], np.log(power[xi > 0]), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.2)
