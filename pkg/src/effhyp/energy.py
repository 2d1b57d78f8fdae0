"""Weighted energies, the multiplier identity and the space-time estimates.

All spatial inner products are evaluated by Parseval on the grid of a
``GridOperator``; weights ``f^(-k)(t, D_x)`` are Fourier multipliers.
Primes are time derivatives: ``u'' = d^2u/dt^2``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, linalg

from .spectral import GridOperator, Trajectory, TraceError, sobolev_norms
from .weights import THETA, WeightSpec, f_power, japanese, psi

TRACE_TOL = 1e-12

E_SUMMANDS = ("u2", "Au1", "Au", "square")
CALE_SUMMANDS = ("u2", "Au1", "Au", "mixed", "b3")


def _hat(v):
    return np.fft.fft(v, axis=-1)


def _w(k, t, xi):
    return f_power(2 * k, np.asarray(t, dtype=float)[..., None], xi)


def wnorm2(op: GridOperator, v, k: float, t):
    """``||f^(-k)(t, D) v||^2``; ``t`` scalar with ``(n,)`` or array with ``(m, n)``."""
    g = op.grid
    return np.sum(_w(k, t, g.xi) * np.abs(_hat(v)) ** 2, axis=-1) * g.L / g.n ** 2


def winner(op: GridOperator, v, w, k: float, t):
    """``<f^(-k) v, f^(-k) w>`` (equivalently ``<f^(-2k) v, w>``)."""
    g = op.grid
    return np.sum(_w(k, t, g.xi) * _hat(v) * np.conj(_hat(w)), axis=-1) * g.L / g.n ** 2


def _psi(t, lam):
    """``psi`` with the value 0 at ``t <= 0`` (the limit used when traces vanish)."""
    t = np.asarray(t, dtype=float)
    safe = np.where(t > 0, t, 1.0)
    return np.where(t > 0, psi(safe, lam), 0.0)


def _check_traces(traj: Trajectory, end: str) -> None:
    i = 0 if end == "lower" else -1
    norms = sobolev_norms(np.stack([traj.u[i], traj.du[i], traj.d2u[i]]), 0.0, traj.grid)
    if np.max(norms) > TRACE_TOL:
        raise TraceError(f"traces at t = {traj.t[i]:.6g} do not vanish (max norm {np.max(norms):.3g})")


# -- multiplier ---------------------------------------------------------------------

def apply_M(traj: Trajectory, op: GridOperator, spec: WeightSpec, theta: float = THETA,
            end: str = "lower") -> np.ndarray:
    """``M u = psi(t) (D_t^2 - theta A) u`` per sample, with ``D_t^2 u = -u''``.

    Samples at ``t <= 0`` get ``M u = 0``, the limit when the traces vanish.
    """
    _check_traces(traj, end)
    ps = _psi(traj.t, spec.lam)[:, None]
    return ps * (-traj.d2u - theta * op.apply_A(traj.t, traj.u))


# -- energies ------------------------------------------------------------------------

def energy_E(op: GridOperator, t: float, u, du, d2u, k: float, spec: WeightSpec) -> dict[str, float]:
    """The four summands of ``E_k`` (``a2`` frozen at time 0) and their total."""
    ps = _psi(t, spec.lam)
    Au = op.apply_A(t, u, frozen=True)
    Adu = op.apply_A(t, du, frozen=True)
    out = {
        "u2": ps / 3 * wnorm2(op, d2u, k, t),
        "Au1": 2 * ps / 3 * winner(op, Adu, du, k, t).real,
        "Au": ps / 6 * wnorm2(op, Au, k, t),
        "square": 2 * ps / 3 * wnorm2(op, d2u + 0.5 * Au, k, t),
    }
    out["total"] = sum(out[s] for s in E_SUMMANDS)
    return out


def energy_calE(op: GridOperator, t: float, u, du, d2u, k: float, spec: WeightSpec) -> dict[str, float]:
    """The five summands of the weighted energy paired with the multiplier.

    ``k`` is the weight order (``N`` or ``N + 1/2``).  The last summand is the
    ``eps^(1/3) t e^(-2 lam t) 2 Im <f^(-2k) b3 u, u'>`` correction.
    """
    ps = _psi(t, spec.lam)
    Au = op.apply_A(t, u)
    Adu = op.apply_A(t, du)
    out = {
        "u2": ps * wnorm2(op, d2u, k, t),
        "Au1": 2 * ps / 3 * winner(op, Adu, du, k, t).real,
        "Au": ps / 3 * wnorm2(op, Au, k, t),
        "mixed": 2 * ps / 3 * winner(op, d2u, Au, k, t).real,
        "b3": op.pre["b3"] * np.asarray(t) * np.exp(-2 * spec.lam * np.asarray(t))
        * 2 * winner(op, op.apply_b3(t, u), du, k, t).imag,
    }
    out["total"] = sum(out[s] for s in CALE_SUMMANDS)
    return out


@dataclass
class SkResult:
    lhs: float
    rhs: float
    gap: float
    lower_bound: float

    @property
    def scale(self) -> float:
        return max(abs(self.lhs), abs(self.rhs), 1e-300)


def s_k_identity(op: GridOperator, t: float, u, d2u, k: float, spec: WeightSpec) -> SkResult:
    """Three-term block versus its completed-square form (``theta = 1/3``).

    ``lower_bound`` is ``(1/3)||u''||^2 + (4/27)||Au||^2 + (1/3)||u'' + Au/3||^2``
    (times ``psi``), which the block dominates since the difference equals
    ``(1/3) psi ||f^(-k)(u'' + 2Au/3)||^2``.  ``A`` uses ``a2`` frozen at time 0.
    """
    if abs(spec.theta - 1 / 3) > 1e-15:
        raise ValueError("the completed square needs theta = 1/3")
    th = spec.theta
    ps = _psi(t, spec.lam)
    Au = op.apply_A(t, u, frozen=True)
    n_u2, n_Au = wnorm2(op, d2u, k, t), wnorm2(op, Au, k, t)
    cross = winner(op, Au, d2u, k, t).real
    lhs = ps * (n_u2 + th * n_Au + 2 * th * cross)
    rhs = ps * (n_u2 / 3 + n_Au / 6 + 2 / 3 * wnorm2(op, d2u + 0.5 * Au, k, t))
    lb = ps * (n_u2 / 3 + 4 / 27 * n_Au + wnorm2(op, d2u + Au / 3, k, t) / 3)
    return SkResult(lhs, rhs, abs(lhs - rhs), lb)


# -- the multiplier identity ------------------------------------------------------

def ddt4(y, t) -> np.ndarray:
    """Fourth-order finite-difference derivative on a uniform grid (one-sided at the ends)."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(t) < 5:
        raise ValueError("need at least five samples")
    h = t[1] - t[0]
    if not np.allclose(np.diff(t), h, rtol=1e-9, atol=0):
        raise ValueError("time grid must be uniform")
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    fw = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    d[0] = fw @ y[:5]
    d[1] = np.array([-3, -10, 18, -6, 1]) / (12 * h) @ y[:5]
    d[-1] = -fw @ y[::-1][:5]
    d[-2] = -np.array([-3, -10, 18, -6, 1]) / (12 * h) @ y[::-1][:5]
    return d


@dataclass
class Decomposition:
    t: np.ndarray
    pairing: np.ndarray
    calE: np.ndarray
    calE_half: np.ndarray
    dcalE: np.ndarray
    residual: np.ndarray
    lead_pairing: np.ndarray      # 2 ||f^-N P u|| ||f^-N M u||
    lead_top: np.ndarray          # 2 ||f^-N u'''|| ||f^-N M u||
    summands: dict = field(default_factory=dict)

    def leading_terms(self, lam: float, N: float) -> dict[str, np.ndarray]:
        return {"dt_energy": np.abs(self.dcalE), "half_weight": 2 * N / 3 * np.abs(self.calE_half),
                "lambda": 2 * lam * np.abs(self.calE), "pairing_bound": self.lead_pairing,
                "top_order": self.lead_top}


def pairing_decomposition(traj: Trajectory, op: GridOperator, spec: WeightSpec,
                          end: str = "lower") -> Decomposition:
    """``R = -2 Im <f^(-2N) P u, M u> - d/dt E_N - (2N/3) E_(N+1/2) - 2 lam E_N`` per sample."""
    N, lam = spec.N, spec.lam
    t = traj.t
    Mu = apply_M(traj, op, spec, end=end)
    Pu = op.apply_P(t, traj.u, traj.du, traj.d2u, traj.d3u)
    pairing = -2 * winner(op, Pu, Mu, N, t).imag
    e = energy_calE(op, t, traj.u, traj.du, traj.d2u, N, spec)
    calE = e["total"]
    calE_half = energy_calE(op, t, traj.u, traj.du, traj.d2u, N + 0.5, spec)["total"]
    nM = np.sqrt(wnorm2(op, Mu, N, t))
    lead_p = 2 * np.sqrt(wnorm2(op, Pu, N, t)) * nM
    lead_t = 2 * np.sqrt(wnorm2(op, traj.d3u, N, t)) * nM
    dcalE = ddt4(calE, t)
    R = pairing - dcalE - 2 * N / 3 * calE_half - 2 * lam * calE
    return Decomposition(t, pairing, calE, calE_half, dcalE, R, lead_p, lead_t,
                         {s_: e[s_] for s_ in CALE_SUMMANDS})


def lambda_split(traj: Trajectory, op: GridOperator, spec: WeightSpec) -> dict[str, float]:
    """Isolate ``2 lam E_N`` by differencing the decomposition at ``lam`` and ``2 lam``.

    ``E_N`` carries the factor ``e^(-2 lam t)``, so
    ``e^(2 lam t) dE(lam)/dt - e^(4 lam t) dE(2 lam)/dt = e^(2 lam t) 2 lam E(lam)``.
    """
    lam = spec.lam
    spec2 = WeightSpec(spec.N, spec.eps, 2 * lam, spec.theta)
    d1 = pairing_decomposition(traj, op, spec)
    d2 = pairing_decomposition(traj, op, spec2)
    t = traj.t
    isolated = np.exp(2 * lam * t) * d1.dcalE - np.exp(4 * lam * t) * d2.dcalE
    direct = np.exp(2 * lam * t) * 2 * lam * d1.calE
    err = float(np.max(np.abs(isolated - direct)) / max(np.max(np.abs(direct)), 1e-300))
    return {"max_rel_error": err, "scale": float(np.max(np.abs(direct)))}


# -- deficit fit on single modes ------------------------------------------------------

@dataclass
class DeficitFit:
    xi: np.ndarray
    ratio: np.ndarray
    deficit: float
    lead: str


def residual_deficit(op_factory, xis: Sequence[float], spec: WeightSpec, T: float = 0.25,
                     n_t: int = 801, lead: str = "pairing_bound") -> DeficitFit:
    """Fit ``int |R| dt / int lead dt ~ xi0^(-deficit)`` for single-mode states.

    The state is ``u = s^3 e^(i xi0 s) e^(i xi0 x)`` (``s = t``), so its time
    and space frequencies are both ``xi0`` and its traces vanish at ``t = 0``.
    ``op_factory(xi0)`` must return a constant-coefficient ``GridOperator``
    whose grid carries ``xi0``.
    """
    from .spectral import Manufactured
    ratios = []
    for xi0 in xis:
        op = op_factory(xi0)
        ms = Manufactured(t0=0.0, nu=xi0, sigma=np.inf, kappa=xi0)
        ts = np.linspace(0.0, T, n_t)
        traj = ms.trajectory(op, ts)
        d = pairing_decomposition(traj, op, spec)
        L = d.leading_terms(spec.lam, spec.N)[lead]
        ratios.append(integrate.simpson(np.abs(d.residual), x=ts) / integrate.simpson(L, x=ts))
    ratios = np.array(ratios)
    slope = np.polyfit(np.log(xis), np.log(ratios), 1)[0]
    return DeficitFit(np.asarray(xis, dtype=float), ratios, float(-slope), lead)


# -- Garding ------------------------------------------------------------------------------

@dataclass
class GardingReport:
    k: float
    C1: float
    C2: float
    min_margin: float


def _fourier_matrix(op: GridOperator, name: str = "a2", t: float = 0.0) -> np.ndarray:
    """Matrix of the quantised coefficient in the Fourier basis (unitary or not, same matrix).

    Column ``j`` is ``a_(sign xi_j)^(k - j) |xi_j|^deg / n``; coefficient modes below
    the roundoff floor are dropped, since the weight conjugation would amplify
    them by up to ``<xi>^(2k/3)``.
    """
    q = op.q[name]
    n = op.grid.n
    if q.x_independent:
        return np.diag(q.symbol(t))
    spec = []
    for a in q.coeffs(t):
        ah = np.fft.fft(np.asarray(a, dtype=complex)) / n
        ah[np.abs(ah) <= 64 * np.finfo(float).eps * np.abs(ah).max()] = 0.0
        spec.append(ah)
    ap, am = spec
    diff = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    cols = np.where(q.pos[None, :], ap[diff], np.where(q.neg[None, :], am[diff], 0.5 * (ap + am)[diff]))
    mag = q.mag if q.deg else np.ones(n)
    return cols * mag[None, :]


def _weighted_hermitian(op: GridOperator, k: float, t_weight: float) -> np.ndarray:
    wk = f_power(k, t_weight, op.grid.xi)
    B = (wk[:, None] * _fourier_matrix(op)) / wk[None, :]
    return 0.5 * (B + B.conj().T)


def garding(op: GridOperator, k: float, spec: WeightSpec, C2: float | None = None,
            t_weight: float = 0.0) -> GardingReport:
    """Largest ``C1`` with ``Re <f^-k a2 v, f^-k v> >= C1 ||f^-k v||_1^2 - C2 ||f^-k v||^2``.

    ``a2`` is frozen at time 0 and the weight taken at ``t_weight``.  In the
    variable ``w = f^-k v`` this is the generalised eigenproblem
    ``(H + C2) w = C1 <D>^2 w`` with ``H`` the Hermitian part of ``f^-k a2 f^k``
    in the Fourier basis.  ``C2`` defaults to ``sup |a2|`` on the unit
    sphere; for x-dependent ``a2`` and large ``k`` that choice can leave
    ``C1 <= 0`` (see ``garding_c2``).
    """
    g = op.grid
    n = g.n
    if C2 is None:
        ap, am = op.q["a2"].coeffs(0.0)
        C2 = float(max(np.abs(ap).max(), np.abs(am).max()))
    H = _weighted_hermitian(op, k, t_weight)
    lam2 = japanese(g.xi) ** 2
    ev = linalg.eigh(H + C2 * np.eye(n), np.diag(lam2), eigvals_only=True)
    C1 = float(ev[0])
    margin = float(np.min(linalg.eigvalsh(H + C2 * np.eye(n) - C1 * np.diag(lam2))))
    return GardingReport(k, C1, float(C2), margin)


def garding_c2(op: GridOperator, k: float, C1: float, t_weight: float = 0.0) -> float:
    """Smallest ``C2`` making the weighted Garding inequality hold with the given ``C1``."""
    H = _weighted_hermitian(op, k, t_weight)
    lam2 = japanese(op.grid.xi) ** 2
    return float(max(0.0, -np.min(linalg.eigvalsh(H - C1 * np.diag(lam2)))))


# -- a priori estimates ------------------------------------------------------------------------

@dataclass
class AprioriResult:
    lam: float
    lhs: float
    rhs: float
    ratio: float
    direction: str
    violation: bool = False


def _shifted_norms2(v, s, grid):
    return sobolev_norms(v, s, grid) ** 2


def apriori_check(traj: Trajectory, op: GridOperator, spec: WeightSpec, direction: str = "backward",
                  p: float | None = None, tol: float = 1e-300) -> AprioriResult:
    """Both sides of the weighted space-time estimate.

    ``backward``: traces vanish at the lower end, weights ``e^(-2 lam s)``,
    ``(1+s)^(-2N)`` on the left and ``(1+s/3)^(-2N)`` on the right.
    ``forward``: traces vanish at the upper end, weights ``e^(2 lam s)``,
    ``s^(3-k)`` and ``(1+s/3)^(2N)`` on the left, ``s^2 (1+s)^(2N)`` on the right.
    ``p`` is the Sobolev shift (default ``-2N/3``, so the right side is an L2 norm).
    """
    N, lam = spec.N, spec.lam
    p = -2 * N / 3 if p is None else p
    g = op.grid
    s = np.asarray(traj.t, dtype=float)
    if direction == "backward":
        _check_traces(traj, "lower")
    elif direction == "forward":
        _check_traces(traj, "upper")
    else:
        raise ValueError("direction must be 'backward' or 'forward'")
    Pu = op.apply_P(s, traj.u, traj.du, traj.d2u, traj.d3u)
    nu = {(0, 2): _shifted_norms2(traj.u, 2 + p, g), (1, 1): _shifted_norms2(traj.du, 1 + p, g),
          (2, 0): _shifted_norms2(traj.d2u, p, g), (0, 1): _shifted_norms2(traj.u, 1 + p, g),
          (1, 0): _shifted_norms2(traj.du, p, g)}
    nP = _shifted_norms2(Pu, 2 * N / 3 + p, g)
    if direction == "backward":
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_s = np.where(s > 0, 1.0 / np.where(s > 0, s, 1.0), 0.0)
        body = s * nu[(0, 2)] + nu[(1, 1)] + inv_s * nu[(2, 0)] + nu[(0, 1)] + nu[(1, 0)]
        lw = lam * np.exp(-2 * lam * s - 2 * N * np.log1p(s)) * body
        rw = np.exp(-2 * lam * s - 2 * N * np.log1p(s / 3)) * nP
    else:
        body = s ** 3 * nu[(0, 2)] + s ** 2 * nu[(1, 1)] + s * nu[(2, 0)] + nu[(0, 1)] + nu[(1, 0)]
        lw = lam * np.exp(2 * lam * s + 2 * N * np.log1p(s / 3)) * body
        rw = np.exp(2 * lam * s + 2 * N * np.log1p(s)) * s ** 2 * nP
    lhs = float(integrate.simpson(lw, x=s))
    rhs = float(integrate.simpson(rw, x=s))
    if rhs <= tol:
        return AprioriResult(lam, lhs, rhs, 0.0 if lhs <= tol else np.inf, direction, lhs > tol)
    return AprioriResult(lam, lhs, rhs, lhs / rhs, direction)


@dataclass
class EnergyReport:
    t: np.ndarray
    E: dict
    calE: dict
    S: np.ndarray
    pairing: np.ndarray
    residual: np.ndarray
    apriori: list = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        cols = ([f"E_{s}" for s in (*E_SUMMANDS, "total")] + [f"calE_{s}" for s in (*CALE_SUMMANDS, "total")]
                + ["S", "pairing", "residual"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *cols])
            for i, t in enumerate(self.t):
                row = ([self.E[s][i] for s in (*E_SUMMANDS, "total")]
                       + [self.calE[s][i] for s in (*CALE_SUMMANDS, "total")]
                       + [self.S[i], self.pairing[i], self.residual[i]])
                w.writerow([f"{t:.12g}", *(f"{v:.12g}" for v in row)])


def energy_report(traj: Trajectory, op: GridOperator, spec: WeightSpec, k: float | None = None) -> EnergyReport:
    k = spec.N if k is None else k
    E = energy_E(op, traj.t, traj.u, traj.du, traj.d2u, k, spec)
    S = s_k_identity(op, traj.t, traj.u, traj.d2u, k, spec).lhs
    d = pairing_decomposition(traj, op, spec)
    calE = dict(d.summands)
    calE["total"] = d.calE
    return EnergyReport(traj.t, E, calE, S, d.pairing, d.residual)
