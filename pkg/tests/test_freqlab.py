import numpy as np
import pytest
from scipy.linalg import expm

from effhyp import _kernels
from effhyp import freqlab as fl
from effhyp import models
from effhyp import reduction as rd

XS = [2.0 ** j for j in range(3, 11)]
SHIFT = np.diag([1.0, 1.0], 1)


def reduced(name):
    return rd.reduced_from_dict(models.get(name))


def test_zero_frequency_propagator():
    # a2 = alpha = 0 at xi = 0 leaves u''' = 0
    r = reduced("hyperbolic")
    res = fl.per_frequency_solve(r, 0.0, T=0.25)
    assert np.allclose(res.final, expm(0.25 * SHIFT), atol=1e-10)
    assert res.amplification == pytest.approx(np.linalg.norm([0.25 ** 2 / 2, 0.25, 1.0]), rel=1e-9)


def test_companion_coeffs():
    r = rd.reduced_from_dict({"a2": "xi^2", "b2": "0.5*xi^2"})
    k0, k1, k2 = fl.companion_coeffs(r, np.array([0.0, 0.2]), 3.0)
    assert np.allclose(k1, [0.0, -0.2 * 9])
    assert np.allclose(k0, 4.5j) and np.allclose(k2, 0.0)
    _, k1c, _ = fl.companion_coeffs(r, 0.2, 3.0, c=2.0)
    assert k1c - k1[1] == pytest.approx(6j)


def test_loss_fit_synthetic():
    xi = np.geomspace(8, 4096, 10)
    fit = fl.loss_fit((xi, 3.0 * xi ** 2))
    assert fit.kappa == pytest.approx(2.0, abs=1e-12) and fit.status == "ok"
    noisy = fl.loss_fit((xi, xi ** 2 * np.exp(np.resize([3.0, -3.0], xi.size))))
    assert noisy.status == "fit-unreliable"
    with pytest.raises(ValueError):
        fl.loss_fit((xi[:4], xi[:4]))


def test_hyperbolic_control_has_no_loss():
    fit = fl.loss_fit(fl.frequency_run(models.get("hyperbolic"), "hyperbolic", xis=XS))
    assert abs(fit.kappa) <= 0.1


def test_effective_loss_below_proved_bound():
    run = fl.frequency_run(models.get("demo-scaled"), "demo", xis=XS)
    assert set(run.methods) == {"dp5-kernel"}
    assert fl.loss_fit(run).kappa <= fl.loss_bounds(7 / 6)["M"]


def test_loss_bounds():
    assert fl.loss_bounds(7 / 6) == {"N": 12, "M": 6.0, "N_conjectured": 6, "M_conjectured": 2.0}


def test_kernel_matches_scipy_fallback(monkeypatch):
    r = reduced("demo-scaled")
    a = fl.per_frequency_solve(r, 64.0)
    monkeypatch.setattr(fl, "_poly_fit", lambda T, fn, tol=1e-13: None)
    b = fl.per_frequency_solve(r, 64.0)
    assert (a.method, b.method) == ("dp5-kernel", "rk45-scipy")
    assert np.allclose(a.final, b.final, rtol=1e-6, atol=1e-8)
    # the fallback samples the sup only at accepted steps
    assert b.amplification == pytest.approx(a.amplification, rel=1e-3)


def test_step_budget():
    kc = np.zeros((3, 1), dtype=complex)
    _, _, _, status = _kernels.integrate_balanced(kc, 1.0, np.eye(3), 0.0, 1.0, max_steps=1)
    assert status == 2


def test_step_underflow_raises(monkeypatch):
    monkeypatch.setattr(fl._kernels, "integrate_balanced",
                        lambda *a, **k: (None, np.ones(3), 0, 1))
    with pytest.raises(fl.StepUnderflowError):
        fl.per_frequency_solve(reduced("demo-scaled"), 8.0)


def test_zero_data_rejected():
    with pytest.raises(ValueError):
        fl.per_frequency_solve(reduced("demo-scaled"), 8.0, data=np.zeros(3))


def test_sweep_zero_row_is_plain_fit(tmp_path):
    doc = models.get("demo-scaled")
    tab = fl.robustness_sweep(doc, "demo", [0.0, 1.0], xis=XS)
    plain = fl.loss_fit(fl.frequency_run(doc, "demo", 0.0, XS))
    assert tab.kappa[0] == plain.kappa
    assert np.isfinite(tab.growth()) and tab.spread >= 0
    tab.to_csv(tmp_path / "s.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 1 + 2 * len(XS)
    with pytest.raises(ValueError):
        fl.robustness_sweep(doc, "demo", [])


def test_jobs_do_not_change_results():
    doc = models.get("hyperbolic")
    a = fl.frequency_run(doc, xis=XS[:4], jobs=1)
    b = fl.frequency_run(doc, xis=XS[:4], jobs=2)
    assert np.array_equal(a.A, b.A)


def test_default_jobs(monkeypatch):
    monkeypatch.setenv("EFFHYP_JOBS", "3")
    assert fl.default_jobs() == 3
    monkeypatch.setenv("EFFHYP_JOBS", "many")
    assert fl.default_jobs() == 1
