"""Non-Markovianity diagnostics: trace-distance backflow and divisibility."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import channel
from .eigen import jacobi_eigvalsh
from .spectral import DecoherenceTable, integrate

NEG_RATE_TOL = 1e-12
ROOT_XTOL = 1e-8
REGIME_DEADBAND = 1e-9

Interval = tuple[float, float]


@dataclass
class NmReport:
    """Summary of the non-Markovianity of one dynamical map."""

    N_phi: float
    N_psi: float
    backflow_intervals_phi: list[Interval]
    backflow_intervals_psi: list[Interval]
    N1: float = 0.0
    divisible: bool = True
    negativity_intervals_sum: list[Interval] = field(default_factory=list)
    negativity_intervals_diff: list[Interval] = field(default_factory=list)
    sampled_max_by_category: dict[str, float] = field(default_factory=dict)
    rhp_integral: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def N_blp(self) -> float:
        return max(self.N_phi, self.N_psi)


# -- trace distance ---------------------------------------------------------

def _matrix(r) -> np.ndarray:
    return r.data if isinstance(r, channel.DensityMatrix) else np.asarray(r, dtype=complex)


def _canonical_sign(d: np.ndarray) -> np.ndarray:
    """Flip each matrix so its first nonzero entry has positive real/imag part.

    a - b and b - a are exact negatives, so both orders reach the
    eigensolver as the same bits and the distance is exactly symmetric.
    """
    flat = np.concatenate([d.real, d.imag], axis=-1).reshape(d.shape[:-2] + (-1,))
    first = np.take_along_axis(flat, np.argmax(flat != 0, axis=-1)[..., None], axis=-1)
    return d * np.where(first < 0, -1.0, 1.0)[..., None]


def trace_distance_many(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Half the trace norm of a - b for stacks of matrices."""
    d = np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex)
    w = jacobi_eigvalsh(_canonical_sign(d))
    return 0.5 * np.sum(np.abs(w), axis=-1)


def trace_distance(r1, r2) -> float:
    return float(trace_distance_many(_matrix(r1), _matrix(r2)))


# -- sign structure of the rates --------------------------------------------

def _bracketed_root(f, lo: float, hi: float, xtol: float = ROOT_XTOL) -> float:
    """Sign change of f inside [lo, hi]; Brent's method, bisection as fallback."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0 or (f_lo < 0) == (f_hi < 0):
        return hi
    return brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


def negativity_intervals(tau: np.ndarray, rate: np.ndarray, rate_fn=None,
                         thresh: float = NEG_RATE_TOL, xtol: float = ROOT_XTOL) -> list[Interval]:
    """Maximal time intervals on which ``rate`` is negative.

    Runs of negative grid samples are kept when their deepest value is below
    ``-thresh``.  Each boundary is bracketed by the sign change between two
    grid points and refined by Brent's method on ``rate_fn`` (a scalar function of
    time); without ``rate_fn`` the linear-interpolation zero is used.  A run
    that reaches the end of the grid is closed at the last grid time.
    """
    neg = rate < 0
    out: list[Interval] = []
    i, n = 0, tau.size
    while i < n:
        if not neg[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and neg[j + 1]:
            j += 1
        if rate[i:j + 1].min() < -thresh:
            a = tau[0] if i == 0 else _boundary(tau, rate, i - 1, rate_fn, xtol)
            b = tau[-1] if j == n - 1 else _boundary(tau, rate, j, rate_fn, xtol)
            out.append((float(a), float(b)))
        i = j + 1
    return out


def _boundary(tau, rate, k, rate_fn, xtol):
    """Zero of the rate between grid points k and k + 1."""
    lo, hi = float(tau[k]), float(tau[k + 1])
    if rate_fn is None:
        r0, r1 = rate[k], rate[k + 1]
        return lo + (hi - lo) * r0 / (r0 - r1)
    return _bracketed_root(rate_fn, lo, hi, xtol)


def _rate_fn(table: DecoherenceTable, combo: str):
    """Scalar rate combination at arbitrary time (exact quadrature when possible)."""
    sign = {"gamma1": 0.0, "sum": 1.0, "diff": -1.0}[combo]
    if table.rp is None:
        return None
    layout = float(table.tau_grid[-1])

    def f(t: float) -> float:
        if t <= 0:
            return 0.0
        v = integrate([t], table.rp, table.tol, tau_layout=layout)
        return float(v[0, 0] + sign * v[1, 0])

    return f


def rate_intervals(table: DecoherenceTable, combo: str, xtol: float = ROOT_XTOL) -> list[Interval]:
    rate = {"gamma1": table.gamma1, "sum": table.rate_sum, "diff": table.rate_diff}[combo]
    return negativity_intervals(table.tau_grid, rate, _rate_fn(table, combo), xtol=xtol)


def _exponents(table: DecoherenceTable, times) -> tuple[np.ndarray, np.ndarray]:
    """(Gamma0, delta) at arbitrary times; exact where the table carries its parameters."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if table.rp is None:
        return table.exponents_interp(times)
    g0 = np.zeros(times.size)
    dl = np.zeros(times.size)
    nz = times > 0
    if nz.any():
        v = integrate(times[nz], table.rp, table.tol, tau_layout=float(table.tau_grid[-1]))
        g0[nz], dl[nz] = v[2], v[3]
    return g0, dl


def _backflow(intervals: list[Interval], exponent_of) -> float:
    if not intervals:
        return 0.0
    ends = np.array(intervals, dtype=float)
    lam_a = exponent_of(ends[:, 0])
    lam_b = exponent_of(ends[:, 1])
    return float(np.sum(np.exp(-lam_b) - np.exp(-lam_a)))


# -- measures ---------------------------------------------------------------

def blp_bell_analytic(table: DecoherenceTable) -> NmReport:
    """Backflow for the two Bell pairs in closed form.

    For (Phi+, Phi-) the trace distance is exp(-(2 Gamma0 + delta)), which
    grows exactly where gamma1 + gamma2 < 0; for (Psi+, Psi-) it is
    exp(-(2 Gamma0 - delta)), growing where gamma1 - gamma2 < 0.
    """
    iv_phi = rate_intervals(table, "sum")
    iv_psi = rate_intervals(table, "diff")

    def lam_phi(t):
        g0, dl = _exponents(table, t)
        return 2 * g0 + dl

    def lam_psi(t):
        g0, dl = _exponents(table, t)
        return 2 * g0 - dl

    return NmReport(
        N_phi=_backflow(iv_phi, lam_phi),
        N_psi=_backflow(iv_psi, lam_psi),
        backflow_intervals_phi=iv_phi,
        backflow_intervals_psi=iv_psi,
    )


def blp_single_qubit(table: DecoherenceTable) -> tuple[float, list[Interval]]:
    """Single-qubit backflow: antipodal equatorial pair, distance exp(-Gamma0)."""
    iv = rate_intervals(table, "gamma1")
    return _backflow(iv, lambda t: _exponents(table, t)[0]), iv


def divisibility(table: DecoherenceTable) -> tuple[bool, list[Interval], list[Interval]]:
    """Divisible iff neither gamma1 + gamma2 nor gamma1 - gamma2 goes negative."""
    iv_sum = rate_intervals(table, "sum")
    iv_diff = rate_intervals(table, "diff")
    return (not iv_sum and not iv_diff), iv_sum, iv_diff


def rhp_integral(table: DecoherenceTable) -> float:
    """int sum_c max(0, -gamma_c) dtau over both rate combinations (plotting aid)."""
    neg = np.maximum(0, -table.rate_sum) + np.maximum(0, -table.rate_diff)
    return float(np.trapezoid(neg, table.tau_grid))


def factor_matrix_cp_violations(table: DecoherenceTable, tol: float = channel.POSITIVITY_TOL) -> np.ndarray:
    """Grid cells (i, i+1) whose intermediate map is not completely positive."""
    m = np.exp(-(channel.exponent_matrix(table.Gamma0[1:], table.delta[1:])
                 - channel.exponent_matrix(table.Gamma0[:-1], table.delta[:-1])))
    w = np.linalg.eigvalsh(m).min(axis=-1)
    return np.nonzero(w < tol)[0]


def _positive_runs(dist: np.ndarray) -> list[tuple[int, int]]:
    inc = np.diff(dist) > 0
    runs, i, n = [], 0, inc.size
    while i < n:
        if inc[i]:
            j = i
            while j + 1 < n and inc[j + 1]:
                j += 1
            runs.append((i, j + 1))
            i = j + 1
        else:
            i += 1
    return runs


def _extremum(f, lo: float, hi: float, kind: str, xtol: float = ROOT_XTOL) -> float:
    """Locate a local min/max of f on [lo, hi] by bisection on the slope sign."""
    h = max(1e-7, 1e-9 * max(abs(lo), abs(hi)))
    sgn = 1.0 if kind == "max" else -1.0
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        slope = f(mid + h) - f(mid - h)
        if sgn * slope > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def blp_pair(r1, r2, table: DecoherenceTable, refine: bool = True) -> tuple[float, list[Interval]]:
    """Total increase of the trace distance between two evolving states.

    Sums positive grid increments; with ``refine`` each run's start (a local
    minimum) and end (a local maximum) are relocated in continuous time
    within the neighbouring grid cells, using Hermite-interpolated exponents.
    """
    m1, m2 = _matrix(r1), _matrix(r2)
    diff0 = m1 - m2
    dist = trace_distance_many(channel.evolve_table(diff0, table), 0.0)
    runs = _positive_runs(dist)
    if not runs:
        return 0.0, []
    tau = table.tau_grid
    if not refine:
        total = float(sum(dist[b] - dist[a] for a, b in runs))
        return total, [(float(tau[a]), float(tau[b])) for a, b in runs]

    def d_at(t):
        g0, dl = table.exponents_interp(np.array([t]))
        return float(trace_distance_many(channel.evolve_many(diff0, g0, dl), 0.0)[0])

    total, intervals = 0.0, []
    last = tau.size - 1
    for a, b in runs:
        ta = _extremum(d_at, tau[max(a - 1, 0)], tau[a + 1], "min") if a > 0 else tau[0]
        tb = _extremum(d_at, tau[b - 1], tau[min(b + 1, last)], "max") if b < last else tau[last]
        total += max(0.0, d_at(tb) - d_at(ta))
        intervals.append((float(ta), float(tb)))
    return total, intervals


def eps_grid(table: DecoherenceTable) -> float:
    """Grid-resolution slack for comparing sampled pairs with the Bell value.

    Ten grid steps times the fastest possible growth rate of any trace
    distance on the backflow intervals, 4 max(-(gamma1 +- gamma2), 0).
    """
    grow = 4 * max(0.0, -float(table.rate_sum.min()), -float(table.rate_diff.min()))
    return 10 * table.step * grow


@dataclass
class AdditivityReport:
    N2: float
    twoN1: float
    regime: str  # "sub", "super" or "equal"
    factorized_prediction: float
    gamma1_intervals: list[Interval]
    multi_interval: bool


def additivity_report(table: DecoherenceTable, bell: NmReport | None = None) -> AdditivityReport:
    """Compare the two-qubit measure with twice the single-qubit one.

    ``factorized_prediction`` is sum_i (e^-Gamma0(b_i) + e^-Gamma0(a_i)) N1_i
    over the negativity intervals [a_i, b_i] of gamma1, the value N2 must
    take when the cross-talk is absent.  With one interval this is
    (e^-Gamma0(b) + e^-Gamma0(a)) N1.
    """
    bell = blp_bell_analytic(table) if bell is None else bell
    N1, iv = blp_single_qubit(table)
    pred = 0.0
    if iv:
        ends = np.array(iv)
        fa = np.exp(-_exponents(table, ends[:, 0])[0])
        fb = np.exp(-_exponents(table, ends[:, 1])[0])
        pred = float(np.sum((fb + fa) * (fb - fa)))
    N2, two = bell.N_blp, 2 * N1
    if N2 > two + REGIME_DEADBAND:
        regime = "super"
    elif N2 < two - REGIME_DEADBAND:
        regime = "sub"
    else:
        regime = "equal"
    return AdditivityReport(N2, two, regime, pred, iv, len(iv) > 1)


def nm_report(table: DecoherenceTable) -> NmReport:
    """Bell-pair measures, single-qubit measure and divisibility in one pass."""
    rep = blp_bell_analytic(table)
    rep.N1, _ = blp_single_qubit(table)
    # the Bell backflow intervals are the negativity intervals of the rate combinations
    rep.negativity_intervals_sum = list(rep.backflow_intervals_phi)
    rep.negativity_intervals_diff = list(rep.backflow_intervals_psi)
    rep.divisible = not rep.negativity_intervals_sum and not rep.negativity_intervals_diff
    rep.rhp_integral = rhp_integral(table)
    return rep
