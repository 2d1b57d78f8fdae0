"""Command-line driver.

Every command reads an optional JSON config, writes ``summary.json`` plus CSV
tables to ``--out`` and exits 0 when all checked inequalities hold, 1 when
one is violated and 2 on invalid input.  Summaries are canonical JSON
(sorted keys, no timestamps) so identical config and seed give identical
bytes.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import energy as en
from . import factorization as fz
from . import freqlab as fl
from . import hamilton as hm
from . import models
from . import reduction as rd
from . import spectral as sp
from . import symbols as sy
from . import weights as wt
from .expr import ExpressionError

log = logging.getLogger("effhyp")

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2

TOLERANCES = {
    "cubic_roots": 1e-8,
    "discriminant_rel": 1e-6,
    "sk_gap_rel": 1e-10,
    "lower_bound_rel": 1e-12,
    "garding_margin": 1e-9,
    "factor_residual": fz.RESIDUAL_TOL,
    "cardano_match": 1e-8,
    "loss_slack": 0.5,
    "lambda_uniformity": 0.10,
    "lambda_split": 1e-8,
    "probe_blowup": fz.BLOWUP_FACTOR,
}


class InputError(Exception):
    pass


class StageError(Exception):
    pass


_INPUT_ERRORS = (sy.ModelError, ExpressionError, KeyError, TypeError, ValueError, json.JSONDecodeError)


@contextlib.contextmanager
def stage(name: str, input_stage: bool = False):
    """Attach ``module.operation`` provenance to errors raised inside."""
    try:
        yield
    except (InputError, StageError):
        raise
    except _INPUT_ERRORS as exc:
        if input_stage:
            raise InputError(f"{name}: {exc}") from exc
        raise StageError(f"{name}: {type(exc).__name__}: {exc}") from exc
    except ArithmeticError as exc:
        raise StageError(f"{name}: {type(exc).__name__}: {exc}") from exc


def _plain(v: Any) -> Any:
    """Recursively convert numpy values to JSON-native types with stable rounding."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(f"{v:.12g}")
    if isinstance(v, complex):
        return [_plain(v.real), _plain(v.imag)]
    return v


def config_hash(cfg: dict, seed: int) -> str:
    blob = json.dumps({"config": cfg, "seed": seed}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _model_doc(spec) -> dict:
    if isinstance(spec, str):
        return models.get(spec)
    if not isinstance(spec, dict):
        raise InputError("model entries must be a bundled model name or a JSON object")
    return dict(spec)


def _pow2(n: int, what: str) -> int:
    n = int(n)
    if n < 16 or n & (n - 1):
        raise InputError(f"{what} must be a power of two >= 16, got {n}")
    return n


def _positive(cfg: dict) -> None:
    for k, v in cfg.get("tolerances", {}).items():
        if not (isinstance(v, (int, float)) and v > 0):
            raise InputError(f"tolerance {k!r} must be positive")


def _check_T(T: float) -> float:
    T = float(T)
    if not 0 < T <= 1:
        raise InputError(f"T must lie in (0, 1], got {T}")
    return T


class Run:
    """Collects sections, violations and CSV outputs of one command."""

    def __init__(self, command: str, cfg: dict, seed: int, out: Path, jobs: int) -> None:
        self.command, self.cfg, self.seed, self.out, self.jobs = command, cfg, seed, out, jobs
        self.tol = dict(TOLERANCES, **cfg.get("tolerances", {}))
        self.sections: dict[str, Any] = {}
        self.violations: list[dict] = []
        self.files: list[str] = []

    def violate(self, where: str, what: str, **data) -> None:
        self.violations.append({"where": where, "what": what, **data})

    def csv_path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def summary(self) -> dict:
        return _plain({
            "command": self.command,
            "version": __version__,
            "config_hash": config_hash(self.cfg, self.seed),
            "seed": self.seed,
            "tolerances": self.tol,
            "status": "violation" if self.violations else "pass",
            "violations": self.violations,
            "files": sorted(self.files),
            "sections": self.sections,
        })


# -- analyze -----------------------------------------------------------------

def cmd_analyze(run: Run, cfg: dict) -> None:
    with stage("symbols.operator_from_dict", input_stage=True):
        m = sy.operator_from_dict(_model_doc(cfg.get("operator", "demo-operator")))
        nt, nx = int(cfg.get("t_points", 17)), int(cfg.get("x_points", 41))
        xis = [float(v) for v in cfg.get("xi", (-1.0, 1.0))]
        N0 = int(cfg.get("N0", 4))
    ts = np.linspace(0.0, m.domain.T, nt)
    xs = np.linspace(*m.domain.X, nx)
    with stage("symbols.scan_hyperbolicity"):
        hyp = sy.scan_hyperbolicity(m, ts, xs, xis)
    sec: dict[str, Any] = {"hyperbolicity": {"passed": hyp.passed, "min_delta": hyp.min_delta,
                                             "argmin": hyp.argmin, "n_points": hyp.n_points,
                                             "n_violations": len(hyp.violations)}}
    run.sections["analyze"] = sec
    if not hyp.passed:
        path = run.csv_path("h0_violations.csv")
        with open(path, "w") as fh:
            fh.write("t,x,xi,delta\n")
            for row in hyp.violations:
                fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
        run.violate("symbols.scan_hyperbolicity", "discriminant negative (H0 fails)",
                    count=len(hyp.violations), first=hyp.violations[0])
        return
    with stage("symbols.detect_triple_locus"):
        locus = sy.detect_triple_locus(m, xs, xis)
    sec["triple_points"] = [p[0] for p in locus.points]
    if not locus.points:
        run.violate("symbols.detect_triple_locus", "no triple characteristic at t = 0")
        return
    x0 = min((p[0] for p in locus.points), key=abs)
    with stage("reduction.reduce_operator"):
        try:
            r = rd.reduce_operator(m, x0=x0, x_grid=xs)
        except rd.HypothesisFailure as exc:
            run.violate("reduction.reduce_operator", str(exc))
            return
    sec["reduced"] = r.to_dict()
    with stage("hamilton.compute_Pi"):
        try:
            Pi = hm.compute_Pi(r, [p[0] for p in locus.points], xis, N0)
        except hm.NotEffectiveError as exc:
            run.violate("hamilton.compute_Pi", str(exc))
            return
        rho = (0.0, x0, 0.0, xis[-1])
        spec = hm.classify(hm.fundamental_matrix(r, rho))
        nec = hm.necessary_conditions(r, rho, fl.loss_bounds(Pi.value, N0)["M"])
    sec["hamilton"] = {"Pi": Pi.value, "N": Pi.N, "N0": N0, "sup_point": Pi.sup_point,
                       "eigenvalues": spec.eigenvalues, "mu": spec.mu, "effective": spec.effective,
                       "necessary_b": nec.condition_b, "loss_bounds": fl.loss_bounds(Pi.value, N0)}
    if not spec.effective:
        run.violate("hamilton.classify", "fundamental matrix has no real eigenvalue pair")
    if not nec.condition_b:
        run.violate("hamilton.necessary_conditions", "subprincipal bound |Im p'| / mu <= 2n(M + 3) fails",
                    margin=nec.margin_b)


# -- energy-verify -----------------------------------------------------------

def _unscaled(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k != "scale"}


def _n_for(doc: dict, N0: int) -> int:
    r = rd.reduced_from_dict(_unscaled(doc))
    return hm.compute_Pi(r, [0.0], (-1.0, 1.0), N0).N


def _manufactured(rng: np.random.Generator, direction: str, T: float) -> sp.Manufactured:
    return sp.Manufactured(t0=0.0 if direction == "backward" else T, nu=rng.uniform(-3, 3),
                           sigma=rng.uniform(0.7, 2.0), x0=rng.uniform(-1, 1), kappa=rng.uniform(-2, 2),
                           poly=(0.0, 0.0, 0.0, 1.0) if direction == "backward" else (0.0, 0.0, 0.0, -1.0))


def cmd_energy(run: Run, cfg: dict) -> None:
    rng = np.random.default_rng(run.seed)
    with stage("energy.config", input_stage=True):
        doc = _model_doc(cfg.get("reduced", "demo-scaled"))
        r = rd.reduced_from_dict(doc)
        n = _pow2(cfg.get("n", 64), "n")
        T = _check_T(cfg.get("T", models.SCALED_T))
        nt = int(cfg.get("t_samples", 401))
        lams = [float(v) for v in cfg.get("lambdas", (8, 16, 32, 64))]
        n_sol = int(cfg.get("solutions", 20))
        n_states = int(cfg.get("states", 100))
        N0 = int(cfg.get("N0", 4))
        deficit_xi = [float(v) for v in cfg.get("deficit_xi", (8, 16, 32, 64))]
        if nt < 5 or n_sol < 1 or n_states < 1 or not lams:
            raise InputError("t_samples >= 5, solutions >= 1, states >= 1 and a lambda list are required")
    with stage("hamilton.compute_Pi"):
        N = int(cfg.get("N") or _n_for(doc, N0))
    op = sp.GridOperator(r, sp.Grid1D(n, float(cfg.get("L", 8 * np.pi))), T=T)
    spec = wt.WeightSpec(N, 1.0, lams[0])
    sec: dict[str, Any] = {"N": N, "T": T, "grid": n, "operator_status": op.status}
    run.sections["energy"] = sec

    with stage("energy.s_k_identity"):
        ts = rng.uniform(0.0, T, n_states)
        u = sp.random_smooth(op.grid, rng, size=n_states)
        d2u = sp.random_smooth(op.grid, rng, size=n_states)
        sk = en.s_k_identity(op, ts, u, d2u, N, spec)
        scale = np.maximum(np.maximum(np.abs(sk.lhs), np.abs(sk.rhs)), 1e-300)
        gap = float(np.max(sk.gap / scale))
        lb = float(np.min((sk.lhs - sk.lower_bound) / scale))
    sec["s_k"] = {"states": n_states, "max_rel_gap": gap, "min_lower_bound_margin": lb}
    if gap >= run.tol["sk_gap_rel"]:
        run.violate("energy.s_k_identity", "identity gap above tolerance", gap=gap)
    if lb < -run.tol["lower_bound_rel"]:
        run.violate("energy.s_k_identity", "completed-square lower bound fails", margin=lb)

    ap: dict[str, Any] = {}
    t_grid = np.linspace(0.0, T, nt)
    for direction in ("backward", "forward"):
        ratios = np.empty((n_sol, len(lams)))
        for i in range(n_sol):
            traj = _manufactured(rng, direction, T).trajectory(op, t_grid)
            with stage("energy.apriori_check"):
                for j, lam in enumerate(lams):
                    res = en.apriori_check(traj, op, wt.WeightSpec(N, 1.0, lam), direction)
                    if res.violation or not np.isfinite(res.ratio):
                        run.violate("energy.apriori_check", "estimate fails (rhs vanishes or ratio infinite)",
                                    direction=direction, solution=i, lam=lam)
                    ratios[i, j] = res.ratio
            if i == 0 and direction == "backward":
                with stage("energy.energy_report"):
                    en.energy_report(traj, op, spec).to_csv(run.csv_path("energy_backward.csv"))
        C = ratios.max(axis=0)
        per_solution = ratios.max(axis=1) / ratios[:, 0] - 1
        ap[direction] = {"C_by_lambda": dict(zip(map(str, lams), C)), "growth": float(C.max() / C[0] - 1),
                         "worst_solution_growth": float(per_solution.max()),
                         "uniform_within_tolerance": bool(C.max() / C[0] - 1 <= run.tol["lambda_uniformity"])}
    sec["apriori"] = ap

    with stage("energy.garding"):
        g = {str(k): en.garding(op, k, spec) for k in (N, N + 0.5)}
        c2_req = {str(k): en.garding_c2(op, k, 0.5 * r.delta) for k in (N, N + 0.5)}
    sec["garding"] = {k: {"C1": v.C1, "C2": v.C2, "min_margin": v.min_margin,
                          "C2_for_half_ellipticity": c2_req[k]} for k, v in g.items()}
    for k, v in g.items():
        if v.min_margin < -run.tol["garding_margin"] * max(1.0, v.C2):
            run.violate("energy.garding", "Garding inequality fails", k=k, margin=v.min_margin)

    if deficit_xi:
        const = rd.reduced_from_dict({"a2": "xi^2"})

        def factory(xi0):
            m = 16
            while m / 2 <= 2 * xi0:
                m *= 2
            return sp.GridOperator(const, sp.Grid1D(m, 2 * np.pi), T=T)
        with stage("energy.residual_deficit"):
            d = en.residual_deficit(factory, deficit_xi, spec, T)
            split = en.lambda_split(sp.Manufactured(nu=deficit_xi[0], sigma=np.inf, kappa=deficit_xi[0])
                                    .trajectory(factory(deficit_xi[0]), np.linspace(0, T, 3201)),
                                    factory(deficit_xi[0]), spec)
        sec["residual"] = {"xi": d.xi, "ratio": d.ratio, "deficit": d.deficit, "lead": d.lead,
                           "deficit_at_least_one": d.deficit >= 1,
                           "lambda_split_rel_error": split["max_rel_error"],
                           "lambda_split_within_tolerance": split["max_rel_error"] <= run.tol["lambda_split"]}


# -- freq-sweep ----------------------------------------------------------------

DEFAULT_SWEEP = {
    "effective": {"model": "demo-scaled", "role": "effective"},
    "hyperbolic": {"model": "hyperbolic", "role": "control"},
    "contrast": {"model": "contrast", "role": "contrast"},
}


def cmd_freq(run: Run, cfg: dict) -> None:
    with stage("freqlab.config", input_stage=True):
        entries = cfg.get("models", DEFAULT_SWEEP)
        xis = [float(v) for v in cfg.get("xi", fl.DEFAULT_XI)]
        cs = [float(v) for v in cfg.get("c_grid", np.linspace(-10, 10, 11))]
        T = _check_T(cfg.get("T", models.SCALED_T))
        N0 = int(cfg.get("N0", 4))
        top = int(cfg.get("top", 6))
        parsed = {}
        for name, e in entries.items():
            doc = _model_doc(e["model"] if isinstance(e, dict) and "model" in e else e)
            rd.reduced_from_dict(doc)
            parsed[name] = (doc, e.get("role", "effective") if isinstance(e, dict) else "effective")
        if len(xis) < 5:
            raise InputError("at least five frequencies are needed")
    sec: dict[str, Any] = {"T": T, "xi": xis, "c_grid": cs}
    run.sections["freqlab"] = sec
    rows = []
    for name, (doc, role) in parsed.items():
        grid = cs if role in ("effective", "contrast") else [0.0]
        with stage("freqlab.robustness_sweep"):
            table = fl.robustness_sweep(doc, name, grid, xis, T, top, run.jobs)
        rows.append(table)
        entry: dict[str, Any] = {"role": role, "kappa": dict(zip(map(str, table.c), table.kappa)),
                                 "fit_residual": dict(zip(map(str, table.c), table.residual)),
                                 "spread": table.spread}
        if role == "effective":
            with stage("hamilton.compute_Pi"):
                r0 = rd.reduced_from_dict(_unscaled(doc))
                Pi = hm.compute_Pi(r0, [0.0], (-1.0, 1.0), N0).value
            b = fl.loss_bounds(Pi, N0)
            k0 = float(table.kappa[int(np.argmin(np.abs(table.c)))])
            entry.update(Pi=Pi, bounds=b, kappa_at_zero=k0, spread_at_most_one=table.spread <= 1.0)
            if k0 > b["M"] + run.tol["loss_slack"]:
                run.violate("freqlab.loss_fit", "measured loss exceeds 2N/3 - 2", kappa=k0, bound=b["M"])
        elif role == "control":
            entry["kappa_in_band"] = bool(abs(table.kappa[0]) <= 0.1)
        else:
            entry["growth"] = table.growth()
            entry["growth_at_least_two"] = table.growth() >= 2.0
        sec[name] = entry
    path = run.csv_path("freq_sweep.csv")
    with open(path, "w") as fh:
        fh.write("model,c,xi,A\n")
        for table in rows:
            for rr in table.runs:
                for x, a in zip(rr.xi, rr.A):
                    fh.write(f"{table.model},{rr.c:.12g},{x:.12g},{a:.12g}\n")


# -- factorize ------------------------------------------------------------------

def cmd_factorize(run: Run, cfg: dict) -> None:
    with stage("factorization.config", input_stage=True):
        entries = cfg.get("models", {"factorizable": "factorizable", "demo": "demo"})
        parsed = {name: rd.reduced_from_dict(_model_doc(e)) for name, e in entries.items()}
        nt = int(cfg.get("t_points", 33))
        xs = np.asarray(cfg.get("x", np.linspace(-1, 1, 9)), dtype=float)
        xis = np.asarray(cfg.get("xi", (-2.0, -1.0, 1.0, 2.0)), dtype=float)
        xi0 = float(cfg.get("xi0", 1.0))
        m_max = int(cfg.get("m_max", 12))
    sec: dict[str, Any] = {}
    run.sections["factorization"] = sec
    for name, r in parsed.items():
        out: dict[str, Any] = {}
        sec[name] = out
        zero_alpha = r.alpha.is_zero
        if zero_alpha:
            with stage("factorization.smooth_root"):
                a2min = float(np.min(np.abs(r.a2(0.0, xs, xis[:, None]))))
                b3max = float(np.max(np.abs(r.pre("b3") * r.b3(0.0, xs, xis[:, None])))) or 1.0
                t_max = min(r.domain.T, 0.1 * a2min ** 1.5 / b3max)
                t = np.linspace(0.0, t_max, nt)
                res = fz.smooth_root(r, t[:, None, None], xs[None, :, None], xis[None, None, :])
                car = fz.cardano_branch(r, res.t, res.x, res.xi)
                k, dist = car.real_branch(res.gamma)
            out["smooth_root"] = dict(res.summary(), t_max=t_max, cardano_max_distance=float(dist.max()))
            res.to_csv(run.csv_path(f"factor_{name}.csv"))
            if res.residual >= run.tol["factor_residual"]:
                run.violate("factorization.smooth_root", "factorisation residual above tolerance",
                            model=name, residual=res.residual)
            if res.b_min < -run.tol["factor_residual"]:
                run.violate("factorization.smooth_root", "quadratic factor not hyperbolic (b < 0)",
                            model=name, b_min=res.b_min)
            if float(dist.max()) > run.tol["cardano_match"]:
                run.violate("factorization.cardano_branch", "smooth root not matched by a closed-form root",
                            model=name, distance=float(dist.max()))
            with stage("factorization.derivative_check"):
                fit = fz.derivative_check(fz.dyadic_root(r, 0.0, xi0))
            out["derivative"] = {"limit": fit.limit, "beta": fit.beta, "status": fit.status,
                                 "beta_in_band": fit.in_band}
        with stage("factorization.nonfactorizability_probe"):
            try:
                probe = fz.nonfactorizability_probe(r, xi0, range(1, m_max + 1))
            except fz.FactorizationError as exc:
                out["probe"] = {"regime": "precondition-failed", "reason": str(exc)}
                continue
        out["probe"] = probe.summary()
        if not zero_alpha and not probe.blowup:
            run.violate("factorization.nonfactorizability_probe",
                        "no divided-difference blow-up although alpha does not vanish", model=name)


# -- selftest ----------------------------------------------------------------------

def cmd_selftest(run: Run, cfg: dict) -> None:
    rng = np.random.default_rng(run.seed)
    with stage("selftest.config", input_stage=True):
        n_cubic = int(cfg.get("cubics", 10_000))
        n_points = int(cfg.get("cube_points", 100_000))
    sec: dict[str, Any] = {}
    run.sections["selftest"] = sec

    with stage("symbols.solve_cubic"):
        q1, q2, q3 = rng.uniform(-3, 3, (3, n_cubic))
        roots, all_real, _, _, _ = sy.solve_cubic(q1, q2, q3)
        oracle = sy.companion_roots(q1, q2, q3)
        scale = sy._coeff_scale(q1, q2, q3)
        err = float(np.max(sy.match_distance(roots, oracle) / scale))
        truth_real = np.all(np.abs(oracle.imag) <= 1e-7 * scale[:, None], axis=1)
        agree = float(np.mean(all_real == truth_real))
        _, _, delta = sy.cubic_discriminants(q1, q2, q3)
        prod = np.prod([(oracle[:, i] - oracle[:, j]) ** 2 for i, j in ((0, 1), (0, 2), (1, 2))], axis=0).real
        drel = float(np.max(np.abs(delta - prod) / np.maximum(np.abs(delta), 1e-300)))
    sec["cubics"] = {"n": n_cubic, "max_root_error": err, "classification_agreement": agree,
                     "max_discriminant_rel_error": drel}
    if err > run.tol["cubic_roots"] or agree < 1.0 or drel > run.tol["discriminant_rel"]:
        run.violate("symbols.solve_cubic", "cubic suite failed", err=err, agree=agree, drel=drel)

    with stage("weights.cube_bound_check"):
        t = rng.uniform(0, 1, n_points)
        xi = np.sign(rng.uniform(-1, 1, n_points)) * 10 ** rng.uniform(-3, 6, n_points)
        cube = wt.cube_bound_check(t, xi)
        psi = {str(lam): wt.psi_inequalities(lam, np.linspace(1e-4, 1, 2001)).passed for lam in (1, 8, 64)}
    sec["weights"] = {"cube_points": n_points, "cube_violations": len(cube.violations), "psi": psi}
    if cube.violations or not all(psi.values()):
        run.violate("weights", "weight inequalities fail", cube_bound=len(cube.violations), psi=psi)

    with stage("factorization.smooth_root"):
        # a2^(3/2)/|b3| >= 1 keeps the sampled times inside the hyperbolic range
        a2 = rng.uniform(1.0, 2.0, 2000)
        b3 = rng.uniform(-1.0, 1.0, 2000)
        tt = rng.uniform(0, 1, 2000) * 0.1 * a2 ** 1.5 / np.abs(b3)
        rho, iters, ok = fz._kernels.newton_smooth_root(tt, a2, b3)
        res = fz.factor_residual(tt, a2, b3, tt * rho)
    sec["factorization"] = {"residual": res, "max_iters": int(iters.max()), "converged": bool(ok.all())}
    if res >= run.tol["factor_residual"] or not ok.all():
        run.violate("factorization.smooth_root", "random factorisation suite failed", residual=res)

    with stage("energy.s_k_identity"):
        r = rd.reduced_from_dict(models.get("demo-scaled"))
        op = sp.GridOperator(r, sp.Grid1D(64), T=models.SCALED_T)
        spec = wt.WeightSpec(12)
        ts = rng.uniform(0, models.SCALED_T, 50)
        sk = en.s_k_identity(op, ts, sp.random_smooth(op.grid, rng, size=50),
                             sp.random_smooth(op.grid, rng, size=50), 12, spec)
        gap = float(np.max(sk.gap / np.maximum(np.abs(sk.lhs), 1e-300)))
    sec["s_k"] = {"max_rel_gap": gap}
    if gap >= run.tol["sk_gap_rel"]:
        run.violate("energy.s_k_identity", "identity gap above tolerance", gap=gap)


# -- demo --------------------------------------------------------------------------

def cmd_demo(run: Run, cfg: dict) -> None:
    cmd_analyze(run, {"operator": "demo-operator"})
    cmd_energy(run, {"reduced": "demo-scaled", "solutions": int(cfg.get("solutions", 20)),
                     "states": 100})
    cmd_freq(run, {"models": {"effective": {"model": "demo-scaled", "role": "effective"},
                              "hyperbolic": {"model": "hyperbolic", "role": "control"}},
                   "c_grid": cfg.get("c_grid", [-10.0, 0.0, 10.0])})
    cmd_factorize(run, {"models": {"factorizable": "factorizable", "demo": "demo"}})


COMMANDS: dict[str, Callable[[Run, dict], None]] = {
    "analyze": cmd_analyze,
    "energy-verify": cmd_energy,
    "freq-sweep": cmd_freq,
    "factorize": cmd_factorize,
    "demo": cmd_demo,
    "selftest": cmd_selftest,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="effhyp", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--out", type=Path, default=Path("effhyp-out"), help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: $EFFHYP_JOBS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = json.loads(args.config.read_text()) if args.config else {}
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
        _positive(cfg)
        jobs = args.jobs if args.jobs is not None else fl.default_jobs()
        if jobs < 1:
            raise InputError("--jobs must be at least 1")
    except (OSError, json.JSONDecodeError, InputError) as exc:
        print(f"effhyp: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    args.out.mkdir(parents=True, exist_ok=True)
    run = Run(args.command, cfg, args.seed, args.out, jobs)
    try:
        COMMANDS[args.command](run, cfg)
    except InputError as exc:
        print(f"effhyp: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StageError as exc:
        run.violate("error", str(exc))
    summary = run.summary()
    (args.out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    for v in run.violations:
        print(f"VIOLATION {v['where']}: {v['what']}", file=sys.stderr)
    print(f"{args.command}: {summary['status']} ({args.out / 'summary.json'})")
    return EXIT_VIOLATION if run.violations else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
