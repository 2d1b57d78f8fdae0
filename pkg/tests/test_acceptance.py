"""Acceptance criteria 1-8, each at its stated tolerance.

Every test prints one ``criterion k PASS|FAIL`` line (repeated in the
terminal summary) and then asserts the verdict.  Nothing here is relaxed to
make a criterion pass.
"""
import math
import time

import numpy as np
import pytest

from effhyp import energy as en
from effhyp import factorization as fz
from effhyp import freqlab as fl
from effhyp import hamilton as hm
from effhyp import models
from effhyp import reduction as rd
from effhyp import spectral as sp
from effhyp import symbols as sy
from effhyp import weights as wt

pytestmark = pytest.mark.acceptance

SEED = 20240611
T = models.SCALED_T


def test_criterion_1_cubic_suite(verdict):
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    q1, q2, q3 = rng.uniform(-3, 3, (3, 10_000))
    roots, all_real, _, _, _ = sy.solve_cubic(q1, q2, q3)
    oracle = sy.companion_roots(q1, q2, q3)
    scale = sy._coeff_scale(q1, q2, q3)
    err = float(np.max(sy.match_distance(roots, oracle) / scale))
    truth = np.all(np.abs(oracle.imag) <= 1e-7 * scale[:, None], axis=1)
    agree = float(np.mean(all_real == truth))
    _, _, delta = sy.cubic_discriminants(q1, q2, q3)
    prod = np.prod([(oracle[:, i] - oracle[:, j]) ** 2 for i, j in ((0, 1), (0, 2), (1, 2))], axis=0).real
    drel = float(np.max(np.abs(delta - prod) / np.abs(delta)))
    elapsed = time.perf_counter() - start
    assert verdict(1, "cubic roots and discriminants", [
        (err <= 1e-8, f"root error {err:.2e} <= 1e-8"),
        (agree == 1.0, f"classification agreement {agree:.4f} == 1"),
        (drel <= 1e-6, f"discriminant rel error {drel:.2e} <= 1e-6"),
        (elapsed < 5.0, f"runtime {elapsed:.2f}s < 5s"),
    ])


def test_criterion_2_hamilton_suite(verdict, rng):
    # eigenvalues at the triple point against the analytic 2x2 block
    eig_err = 0.0
    for xi in (-2.0, -0.5, 1.0, 3.0):
        for b3 in (-1.0, 0.0, 0.7):
            r = rd.reduced_from_dict({"a2": "xi^2", "b3": f"{b3}*xi^3"})
            rep = hm.classify(hm.fundamental_matrix(r, (0.0, 0.0, 0.0, xi)))
            oracle = [xi ** 2, -xi ** 2, 0.0, 0.0]
            eig_err = max(eig_err, hm.eigen_distance(rep.eigenvalues, oracle) / xi ** 2)

    sym = hm.CubicSymbol.from_model(rd.reduced_from_dict(models.get("demo")))
    z0 = np.array([0.0, 0.0, 0.0, 1.0])
    ref = hm.classify(hm.fundamental_matrix(sym, z0)).eigenvalues
    sympl = 0.0
    for _ in range(100):
        S = hm.random_symplectic(rng, 0.3)
        F = hm.fundamental_matrix_of(lambda z: sym.value(S @ z), np.linalg.solve(S, z0))
        sympl = max(sympl, hm.eigen_distance(np.linalg.eigvals(F), ref))

    Pi0 = hm.compute_Pi(rd.reduced_from_dict(models.get("demo")), [0.0], (-1.0, 1.0)).value
    pi_err = abs(Pi0 - 7 / 6)
    for c in (-10.0, -1.0, 0.3, 2.5, 10.0):
        doc = dict(models.get("demo"), b2=f"{c}*xi^2")
        val = hm.compute_Pi(rd.reduced_from_dict(doc), [0.0], (-1.0, 1.0)).value
        pi_err = max(pi_err, abs(val - (2 / 3 + math.sqrt(c * c + 0.25))))
    assert verdict(2, "fundamental matrix and Pi", [
        (eig_err <= 1e-6, f"eigenvalue error {eig_err:.2e} <= 1e-6"),
        (sympl <= 1e-6, f"symplectic invariance {sympl:.2e} <= 1e-6"),
        (pi_err <= 1e-9, f"Pi error {pi_err:.2e} <= 1e-9"),
    ])


def test_criterion_3_weight_suite(verdict):
    rng = np.random.default_rng(SEED)
    t = rng.uniform(0, 1, 1_000_000)
    xi = rng.choice([-1.0, 1.0], t.size) * 10 ** rng.uniform(-3, 6, t.size)
    cube = wt.cube_bound_check(t, xi)
    consts = wt.symbol_class_constants([4, 8, 16, 32])
    spreads = {a: max(c.values()) / min(c.values()) for a, c in consts.items()}
    psi = {lam: wt.psi_inequalities(lam, np.geomspace(1e-6, 1.0, 2001)).passed for lam in (1.0, 8.0, 64.0)}
    checks = [(not cube.violations, f"cube bound violations {len(cube.violations)} at 1e6 points")]
    checks += [(s <= 2.0, f"order-{a} constant spread {s:.2f} <= 2") for a, s in spreads.items()]
    checks.append((all(psi.values()), f"psi inequalities {psi}"))
    assert verdict(3, "time weight", checks)


def test_criterion_4_energy_identity(verdict):
    rng = np.random.default_rng(SEED)
    op = sp.GridOperator(rd.reduced_from_dict(models.get("demo-scaled")), sp.Grid1D(64), T=T)
    spec = wt.WeightSpec(12, 1.0, 8.0)
    ts = rng.uniform(0, T, 100)
    u = sp.random_smooth(op.grid, rng, size=100)
    d2u = sp.random_smooth(op.grid, rng, size=100)
    sk = en.s_k_identity(op, ts, u, d2u, 12, spec)
    scale = np.maximum(np.abs(sk.lhs), np.abs(sk.rhs))
    gap = float(np.max(sk.gap / scale))
    lb = float(np.min((sk.lhs - sk.lower_bound) / scale))

    const = rd.reduced_from_dict({"a2": "xi^2"})

    def factory(xi0):
        n = 16
        while n / 2 <= 2 * xi0:
            n *= 2
        return sp.GridOperator(const, sp.Grid1D(n, 2 * np.pi), T=T)
    fit = en.residual_deficit(factory, [8, 16, 32, 64], spec, T)
    assert verdict(4, "energy identity and pairing residual", [
        (gap < 1e-10, f"S_k gap {gap:.2e} < 1e-10"),
        (lb >= -1e-12, f"lower bound margin {lb:.2e} >= 0"),
        (fit.deficit >= 1.0, f"residual deficit {fit.deficit:.3f} >= 1 against {fit.lead}"),
    ])


def _manufactured(rng, direction):
    return sp.Manufactured(t0=0.0 if direction == "backward" else T, nu=rng.uniform(-3, 3),
                           sigma=rng.uniform(0.7, 2.0), x0=rng.uniform(-1, 1), kappa=rng.uniform(-2, 2),
                           poly=(0.0, 0.0, 0.0, 1.0 if direction == "backward" else -1.0))


def test_criterion_5_apriori_estimate(verdict):
    rng = np.random.default_rng(SEED)
    start = time.perf_counter()
    doc = models.get("demo-scaled")
    N = hm.compute_Pi(rd.reduced_from_dict(models.get("demo")), [0.0], (-1.0, 1.0), 4).N
    op = sp.GridOperator(rd.reduced_from_dict(doc), sp.Grid1D(64), T=T)
    lams = (8.0, 16.0, 32.0, 64.0)
    t_grid = np.linspace(0.0, T, 401)
    checks = [(N == 12, f"N = {N}")]
    for direction in ("backward", "forward"):
        ratios = np.empty((20, len(lams)))
        for i in range(20):
            tr = _manufactured(rng, direction).trajectory(op, t_grid)
            for j, lam in enumerate(lams):
                ratios[i, j] = en.apriori_check(tr, op, wt.WeightSpec(N, 1.0, lam), direction).ratio
        C = ratios.max(axis=0)
        growth = C.max() / C[0] - 1
        checks.append((bool(np.all(np.isfinite(ratios))), f"{direction} ratios finite"))
        checks.append((growth <= 0.10, f"{direction} lambda growth {growth:.3f} <= 0.10"))
    elapsed = time.perf_counter() - start
    checks.append((elapsed < 180, f"runtime {elapsed:.1f}s < 180s"))
    assert verdict(5, "weighted a priori estimate", checks)


def test_criterion_6_loss_of_derivatives(verdict):
    start = time.perf_counter()
    N = 12
    bound = 2 * N / 3 - 2 + 0.5
    cs = np.linspace(-10, 10, 11)
    eff = fl.robustness_sweep(models.get("demo-scaled"), "effective", cs, T=T)
    kappa0 = float(eff.kappa[int(np.argmin(np.abs(cs)))])
    hyp = fl.loss_fit(fl.frequency_run(models.get("hyperbolic"), "hyperbolic", T=T))
    con = fl.robustness_sweep(models.get("contrast"), "contrast", cs, T=T)
    elapsed = time.perf_counter() - start
    assert verdict(6, "loss of derivatives", [
        (kappa0 <= bound, f"effective kappa {kappa0:.3f} <= {bound}"),
        (abs(hyp.kappa) <= 0.1, f"hyperbolic kappa {hyp.kappa:.4f} in [-0.1, 0.1]"),
        (eff.spread <= 1.0, f"effective spread {eff.spread:.3f} <= 1"),
        (con.growth() >= 2.0, f"contrast growth {con.growth():.3f} >= 2"),
        (elapsed < 120, f"runtime {elapsed:.1f}s < 120s"),
    ])


def test_criterion_7_factorization(verdict):
    rng = np.random.default_rng(SEED)
    residual = 0.0
    for doc in [models.get("factorizable"), {"a2": "(1.5 + x^2)*xi^2", "b3": "(1 + 0.5*x)*xi^3"}]:
        r = rd.reduced_from_dict(doc)
        t = rng.uniform(0, 0.1, 500)
        res = fz.smooth_root(r, t, rng.uniform(-1, 1, 500), rng.choice([-2.0, -1.0, 1.0, 2.0], 500))
        residual = max(residual, res.residual)
    fit = fz.derivative_check(fz.dyadic_root(rd.reduced_from_dict(models.get("factorizable"))))
    probe = fz.nonfactorizability_probe(rd.reduced_from_dict(models.get("demo")))
    control = fz.nonfactorizability_probe(rd.reduced_from_dict(models.get("factorizable")))
    assert verdict(7, "factorization", [
        (residual < 1e-10, f"residual {residual:.2e} < 1e-10"),
        (fit.limit == 1.0, f"limit b3/a2 = {fit.limit}"),
        (abs(fit.beta - 0.5) <= 0.15, f"correction exponent {fit.beta:.3f} in 0.5 +- 0.15"),
        (probe.blowup and min(probe.growth.values()) >= 1e3,
         f"probe growth {min(probe.growth.values()):.2e} >= 1e3"),
        (control.regime == "factorizable regime", f"control regime {control.regime!r}"),
    ])


def test_criterion_8_solver(verdict):
    op = sp.GridOperator(rd.reduced_from_dict(models.get("demo-scaled")), sp.Grid1D(64), T=T)
    ms = sp.Manufactured(nu=1.5, sigma=1.5, kappa=0.5, poly=(0.2, 0.0, 0.5, 1.0))
    steps = np.array([50, 100, 200])
    err = []
    for s in steps:
        tr = sp.solve_cauchy(op, ms.state(op.grid, 0.0), ms.forcing(op), T, steps=int(s))
        err.append(sp.sobolev_norm(tr.u[-1] - ms.derivs(op.grid, T)[0], 0.0, op.grid))
    order = float(-np.polyfit(np.log(steps), np.log(err), 1)[0])

    grid = sp.Grid1D(32, 2 * np.pi)
    r = rd.reduced_from_dict({"a2": "xi^2", "b3": "xi^3", "b2": "0.5*xi^2", "domain": {"T": 0.25}})
    op1 = sp.GridOperator(r, grid, T=0.25)
    k = 3
    xi = grid.xi[k]
    e = sp.single_mode(grid, k)
    tr = sp.solve_cauchy(op1, sp.State(0.0, e, 0.5j * e, -0.3 * e), None, 0.25, steps=250)
    s = math.sqrt(1 + xi ** 2)
    ref = fl.per_frequency_solve(r, xi, T=0.25, data=np.array([1.0, 0.5j / s, -0.3 / s ** 2]))
    gap = float(np.max(np.abs(tr.u[-1] - ref.final[0, 0] * e)))
    assert verdict(8, "solver convergence", [
        (order >= 3.7, f"time order {order:.2f} >= 3.7"),
        (gap <= 1e-7, f"single mode vs per-frequency oracle {gap:.2e} <= 1e-7"),
    ])
