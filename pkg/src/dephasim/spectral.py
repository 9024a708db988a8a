"""Time-dependent dephasing rates and decoherence functions.

In reduced units (see :mod:`dephasim.params`) the two rates are

    gamma1(tau) = c   * int_0^inf dk F(k) (1 - sinc(2k))  sin(e tau/2) cos(e tau/2)
    gamma2(tau) = c/2 * int_0^inf dk F(k) B(k; d)         sin(e tau/2) cos(e tau/2)

with ``F(k) = k^2 exp(-k^2 s^2/2) / (k^2/2 + 2 g)``, Bogoliubov energy
``e(k) = sqrt(g k^2 + k^4/4)`` and the two-site spatial factor
``B = sinc(2k(d+1)) + sinc(2k(d-1)) - 2 sinc(2k d)``.

The decoherence functions ``Gamma0 = 2 int gamma1`` and ``delta = 4 int gamma2``
are obtained by doing the time integral first, which turns the time factor
into ``sin^2(e tau/2) / e``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .params import ReducedParams

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_STEPS = 2048
GAUSS_CUTOFF = 8.0  # kappa_max = GAUSS_CUTOFF / s
MAX_PANELS = 2_000_000
_CHUNK = 1 << 22  # matrix entries per evaluation block

# 15-point Kronrod rule with embedded 7-point Gauss rule (QUADPACK constants)
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_X15 = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_W15 = np.concatenate([_WGK[:-1], _WGK[::-1]])


class QuadratureFailure(RuntimeError):
    """The adaptive rule could not reach the requested tolerance."""


class HorizonNotFound(RuntimeError):
    """The rates do not settle below the requested level before the cap."""


# -- integrand pieces -------------------------------------------------------

def sinc(x):
    """sin(x)/x with a series branch near the origin."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[small]
    out[small] = 1 - xs * xs / 6 + xs**4 / 120
    xl = x[~small]
    out[~small] = np.sin(xl) / xl
    return out


def one_minus_sinc(x):
    """1 - sin(x)/x, free of cancellation for small x."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 0.1
    x2 = x[small] ** 2
    # x^2/6 - x^4/120 + x^6/5040 - x^8/362880
    out[small] = x2 * (1 / 6 - x2 * (1 / 120 - x2 * (1 / 5040 - x2 / 362880)))
    xl = x[~small]
    out[~small] = 1 - np.sin(xl) / xl
    return out


def spatial_bracket(kappa, d: float):
    """B(k; d) = sinc(2k(d+1)) + sinc(2k(d-1)) - 2 sinc(2k d).

    Written as a combination of ``1 - sinc`` terms; for 2k(d+1) < 0.5 the
    Taylor series is summed directly so the O(k^2) result keeps full
    relative precision.
    """
    k = np.asarray(kappa, dtype=float)
    out = np.empty_like(k)
    small = 2 * k * (d + 1) < 0.5
    ks = k[small]
    acc = np.zeros_like(ks)
    y2 = (2 * ks) ** 2
    term = np.ones_like(ks)
    for n in range(1, 12):
        term = term * (-y2) / ((2 * n) * (2 * n + 1))
        acc += term * ((d + 1) ** (2 * n) + (d - 1) ** (2 * n) - 2 * d ** (2 * n))
    out[small] = acc
    kl = k[~small]
    out[~small] = (2 * one_minus_sinc(2 * kl * d)
                   - one_minus_sinc(2 * kl * (d + 1))
                   - one_minus_sinc(2 * kl * (d - 1)))
    return out


def bogoliubov_energy(kappa, g_tilde: float):
    k = np.asarray(kappa, dtype=float)
    return k * np.sqrt(g_tilde + k * k / 4)


def _kappa_of_energy(e, g_tilde: float):
    e = np.asarray(e, dtype=float)
    return np.sqrt(2 * (np.sqrt(g_tilde * g_tilde + e * e) - g_tilde))


def _envelope(kappa, rp: ReducedParams):
    k = np.asarray(kappa, dtype=float)
    return k * k * np.exp(-0.5 * (k * rp.s) ** 2) / (0.5 * k * k + 2 * rp.g_tilde)


def kappa_max(rp: ReducedParams) -> float:
    return GAUSS_CUTOFF / rp.s


# -- panel layout -----------------------------------------------------------

def _breakpoints(rp: ReducedParams, tau_max: float, cross: bool) -> np.ndarray:
    """Panel edges on [0, kappa_max].

    Each panel spans at most two periods of sin(e(k) tau_max) and, when the
    cross-talk integrand is needed, at most half a period of the bracket's
    fastest oscillation sin(2k(d+1)).
    """
    kmax = kappa_max(rp)
    pts = [np.linspace(0.0, kmax, int(math.ceil(kmax / 0.25)) + 1)]
    if tau_max > 0:
        e_top = float(bogoliubov_energy(kmax, rp.g_tilde))
        n_phase = int(math.ceil(e_top * tau_max / (4 * math.pi)))
        e_edges = np.arange(1, n_phase) * (4 * math.pi / tau_max)
        pts.append(_kappa_of_energy(e_edges, rp.g_tilde))
    if cross:
        h = math.pi / (2 * (rp.d + 1))
        pts.append(np.linspace(0.0, kmax, int(math.ceil(kmax / h)) + 1))
    edges = np.unique(np.concatenate(pts))
    edges = edges[(edges >= 0) & (edges <= kmax)]
    return edges


@dataclass
class _Rule:
    kappa: np.ndarray  # (n_panels, 15)
    wk: np.ndarray
    energy: np.ndarray
    amp1: np.ndarray  # c F (1 - sinc(2k))
    amp2: np.ndarray  # c/2 F B


def _rule(rp: ReducedParams, edges: np.ndarray, cross: bool) -> _Rule:
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    kappa = mid[:, None] + half[:, None] * _X15[None, :]
    wk = half[:, None] * _W15[None, :]
    env = rp.c_rate * _envelope(kappa, rp)
    amp1 = env * one_minus_sinc(2 * kappa)
    amp2 = 0.5 * env * spatial_bracket(kappa, rp.d) if cross else np.zeros_like(kappa)
    return _Rule(kappa, wk, bogoliubov_energy(kappa, rp.g_tilde), amp1, amp2)


def _split(edges: np.ndarray) -> np.ndarray:
    mids = 0.5 * (edges[:-1] + edges[1:])
    out = np.empty(2 * edges.size - 1)
    out[0::2] = edges
    out[1::2] = mids
    return out


# amplitude multipliers for (gamma1, gamma2, Gamma0, delta): Gamma0 = 2 int gamma1,
# delta = 4 int gamma2, and int_0^tau sin(x)cos(x) dtau' = sin(x)^2/e
_DECOH_FACTORS = (2.0, 4.0)


def _panel_values(tau: np.ndarray, rule: _Rule):
    """Per-panel K15 contributions, shape (4, n_tau, n_panels), plus L1 scales (4, n_tau)."""
    n_p = rule.kappa.shape[0]
    x = np.multiply.outer(0.5 * tau, rule.energy)  # (t, p, 15)
    sx = np.sin(x)
    kerns = (sx * np.cos(x), sx * sx / rule.energy)
    out = np.empty((4, tau.size, n_p))
    scale = np.empty((4, tau.size))
    for j, kern in enumerate(kerns):
        for i, amp in enumerate((rule.amp1, rule.amp2)):
            w = amp * rule.wk * (1.0 if j == 0 else _DECOH_FACTORS[i])
            out[2 * j + i] = np.einsum("tpk,pk->tp", kern, w)
            scale[2 * j + i] = np.einsum("tpk,pk->t", np.abs(kern), np.abs(w))
    return out, scale


def _bulk_values(tau: np.ndarray, rule: _Rule) -> np.ndarray:
    """K15 values of the four integrals at every time in ``tau``.

    Works with w = exp(i e tau): sin(x)cos(x) = Im(w)/2 and
    sin(x)^2 = (1 - Re(w))/2.  On a uniform grid the phases of a block of
    rows come from one exp per node times a precomputed table of
    exp(i e k dtau), which is far cheaper than sin/cos per entry.
    """
    energy = rule.energy.ravel()
    w_rate = 0.5 * np.stack([rule.amp1.ravel(), rule.amp2.ravel()], axis=1) * rule.wk.ravel()[:, None]
    w_dec = w_rate * np.array(_DECOH_FACTORS)[None, :] / energy[:, None]
    w_dec_total = w_dec.sum(axis=0)
    # weights acting on the interleaved (re, im) float view of w
    weights = np.zeros((2 * energy.size, 4))
    weights[1::2, 0:2] = w_rate
    weights[0::2, 2:4] = -w_dec
    values = np.empty((4, tau.size))
    block = max(1, min(64, _CHUNK // energy.size))
    dt = np.diff(tau)
    uniform = tau.size > 2 and np.allclose(dt, dt[0], rtol=1e-12, atol=0)
    if uniform:
        steps = np.exp(1j * np.multiply.outer(dt[0] * np.arange(block), energy))
    w = np.empty((block, energy.size), dtype=complex)
    for lo in range(0, tau.size, block):
        n = min(block, tau.size - lo)
        if uniform:
            np.multiply(np.exp(1j * tau[lo] * energy)[None, :], steps[:n], out=w[:n])
        else:
            w[:n] = np.exp(1j * np.multiply.outer(tau[lo:lo + n], energy))
        values[:, lo:lo + n] = (w[:n].view(np.float64) @ weights).T
    values[2:4] += w_dec_total[:, None]
    return values


def _probe_times(tau: np.ndarray, layout: float) -> np.ndarray:
    q = np.quantile(tau, [0.05, 0.25, 0.5, 0.75, 0.9, 1.0])
    return np.unique(np.concatenate([q, [layout]]))


_EDGE_CACHE: dict = {}
_EDGE_CACHE_SIZE = 64


def _accepted_rule(rp: ReducedParams, layout: float, tol: float, cross: bool,
                    probe: tuple) -> _Rule:
    """Quadrature rule meeting ``tol`` at the probe times, cached per layout.

    The probe set always contains ``layout`` itself, the worst case for the
    oscillatory factor, so a cached rule stays valid for any earlier time.
    """
    key = (rp, layout, tol, cross)
    hit = _EDGE_CACHE.get(key)
    if hit is not None:
        return hit
    probe = np.asarray(probe)
    edges = _breakpoints(rp, layout, cross)
    if edges.size - 1 > MAX_PANELS:
        raise QuadratureFailure(f"layout for tau = {layout:g} needs {edges.size - 1} panels")
    rows = [0, 1, 2, 3] if cross else [0, 2]
    while True:
        fine = _split(edges)
        coarse_v, _ = _panel_values(probe, _rule(rp, edges, cross))
        fine_v, scale = _panel_values(probe, _rule(rp, fine, cross))
        fine_v = fine_v[..., 0::2] + fine_v[..., 1::2]
        err = np.abs(coarse_v - fine_v)[rows]  # (r, t, p)
        budget = tol * scale[rows]  # (r, t)
        if np.all(err.sum(-1) <= budget):
            break
        n_p = edges.size - 1
        split = (err > (budget / n_p)[..., None]).any(axis=(0, 1))
        if n_p + int(split.sum()) > MAX_PANELS:
            worst = float(np.max(err.sum(-1) / np.maximum(budget / tol, 1e-300)))
            raise QuadratureFailure(
                f"relative error estimate {worst:.3g} above tol {tol:.3g} with {n_p} panels")
        mids = 0.5 * (edges[:-1] + edges[1:])[split]
        edges = np.sort(np.concatenate([edges, mids]))
        log.debug("refining %d of %d panels", int(split.sum()), n_p)
    if len(_EDGE_CACHE) >= _EDGE_CACHE_SIZE:
        _EDGE_CACHE.pop(next(iter(_EDGE_CACHE)))
    rule = _rule(rp, edges, cross)
    _EDGE_CACHE[key] = rule
    return rule


def integrate(tau, rp: ReducedParams, tol: float = DEFAULT_TOL, cross: bool = True,
              tau_layout: float | None = None) -> np.ndarray:
    """Evaluate (gamma1, gamma2, Gamma0, delta) at each of ``tau``.

    Error control is relative to the L1 norm of each integrand,
    ``|error| <= tol * int |f|``, the usable notion of relative accuracy for
    integrands that change sign.  The panel layout is fixed for the largest
    time (``tau_layout``), where the integrand oscillates fastest, and is
    refined adaptively on a handful of probe times: each panel's K15 value
    is compared with the K15 sum over its two halves, and panels whose
    difference exceeds their share of the budget are bisected.  The whole
    time grid is then evaluated on the accepted layout.

    Returns:
        array of shape (4, len(tau)); rows 1 and 3 are zero if ``cross`` is
        false.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if tau.size == 0:
        return np.zeros((4, 0))
    if np.any(tau < 0) or not np.all(np.isfinite(tau)):
        raise ValueError("tau must be finite and nonnegative")
    layout = float(tau.max()) if tau_layout is None else max(float(tau.max()), float(tau_layout))
    if layout == 0.0:
        return np.zeros((4, tau.size))
    rule = _accepted_rule(rp, layout, tol, cross, tuple(_probe_times(tau, layout)))
    out = _bulk_values(tau, rule)
    out[:, tau == 0.0] = 0.0  # exact: every time factor vanishes
    return out


def gamma1(tau: float, rp: ReducedParams, tol: float = DEFAULT_TOL) -> float:
    """Single-qubit dephasing rate at reduced time ``tau`` (units 1/t0)."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0:
        return 0.0
    return float(integrate([tau], rp, tol, cross=False)[0, 0])


def gamma2(tau: float, rp: ReducedParams, tol: float = DEFAULT_TOL) -> float:
    """Cross-talk rate at reduced time ``tau``; vanishes as the qubits separate."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0:
        return 0.0
    return float(integrate([tau], rp, tol)[1, 0])


def exponents_at(tau, rp: ReducedParams, tol: float = DEFAULT_TOL):
    """(Gamma0, delta) at arbitrary reduced times, straight from the quadrature."""
    v = integrate(tau, rp, tol)
    return v[2], v[3]


# -- tables -----------------------------------------------------------------

@dataclass
class DecoherenceTable:
    """Rates and decoherence functions sampled on a uniform reduced-time grid.

    ``gamma1_mid``/``gamma2_mid`` hold the rates at the cell midpoints when
    the table was built with ``midpoints=True``; the RK4 oracle uses them.
    """

    tau_grid: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    Gamma0: np.ndarray
    delta: np.ndarray
    rp: ReducedParams | None = None
    tol: float = DEFAULT_TOL
    gamma1_mid: np.ndarray | None = None
    gamma2_mid: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.tau_grid.size
        for name in ("gamma1", "gamma2", "Gamma0", "delta"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if n < 2 or self.tau_grid[0] != 0 or np.any(np.diff(self.tau_grid) <= 0):
            raise ValueError("tau_grid must start at 0 and increase strictly")

    @property
    def step(self) -> float:
        return float(self.tau_grid[1] - self.tau_grid[0])

    @property
    def rate_sum(self) -> np.ndarray:
        return self.gamma1 + self.gamma2

    @property
    def rate_diff(self) -> np.ndarray:
        return self.gamma1 - self.gamma2

    def rates_at(self, tau) -> np.ndarray:
        """(gamma1, gamma2) at arbitrary times, recomputed by quadrature."""
        if self.rp is None:
            raise ValueError("table carries no parameters; continuous-time rates unavailable")
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        out = np.zeros((2, tau.size))
        nz = tau > 0
        if nz.any():
            out[:, nz] = integrate(tau[nz], self.rp, self.tol, tau_layout=self.tau_grid[-1])[:2]
        return out

    def exponents_interp(self, tau) -> tuple[np.ndarray, np.ndarray]:
        """(Gamma0, delta) between grid points by cubic Hermite interpolation.

        Uses the sampled rates as exact derivatives (dGamma0/dtau = 2 gamma1,
        d delta/dtau = 4 gamma2), so the interpolant is O(h^4) accurate once
        the short initial transient from high-energy modes has passed.
        """
        tau = np.asarray(tau, dtype=float)
        return (_hermite(self.tau_grid, self.Gamma0, 2 * self.gamma1, tau),
                _hermite(self.tau_grid, self.delta, 4 * self.gamma2, tau))


def _hermite(x, y, dy, xq):
    i = np.clip(np.searchsorted(x, xq, side="right") - 1, 0, x.size - 2)
    h = x[i + 1] - x[i]
    t = (xq - x[i]) / h
    t2, t3 = t * t, t * t * t
    return ((2 * t3 - 3 * t2 + 1) * y[i] + (t3 - 2 * t2 + t) * h * dy[i]
            + (-2 * t3 + 3 * t2) * y[i + 1] + (t3 - t2) * h * dy[i + 1])


def build_table(rp: ReducedParams, tau_max: float, n_steps: int = DEFAULT_STEPS,
                tol: float = DEFAULT_TOL, midpoints: bool = False) -> DecoherenceTable:
    """Sample rates and decoherence functions on ``n_steps + 1`` uniform times."""
    if not tau_max > 0:
        raise ValueError("tau_max must be positive")
    if n_steps < 64:
        raise ValueError("n_steps must be at least 64")
    tau = np.linspace(0.0, tau_max, n_steps + 1)
    vals = np.zeros((4, tau.size))
    vals[:, 1:] = integrate(tau[1:], rp, tol)
    mids = (None, None)
    if midpoints:
        m = integrate(0.5 * (tau[1:] + tau[:-1]), rp, tol, tau_layout=tau_max)
        mids = (m[0], m[1])
    return DecoherenceTable(
        tau_grid=tau, gamma1=vals[0], gamma2=vals[1], Gamma0=vals[2], delta=vals[3],
        rp=rp, tol=tol, gamma1_mid=mids[0], gamma2_mid=mids[1],
        meta={"tau_max": tau_max, "n_steps": n_steps, "tol": tol},
    )


def cumulative_exponents(table: DecoherenceTable) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative-trapezoid Gamma0 and delta from the sampled rates (check route)."""
    h = np.diff(table.tau_grid)
    g0 = np.concatenate([[0.0], np.cumsum(h * (table.gamma1[1:] + table.gamma1[:-1]))])
    dl = np.concatenate([[0.0], np.cumsum(2 * h * (table.gamma2[1:] + table.gamma2[:-1]))])
    return g0, dl


# -- horizon ----------------------------------------------------------------

def auto_horizon(rp: ReducedParams, eta: float = 1e-4, window: float = 0.25,
                 cap: float = 4096.0, tol: float = 1e-8, samples: int = 4096) -> float:
    """Smallest horizon after which the rates stay below ``eta`` times their peak.

    The rates are sampled on a doubling sequence of horizons T; a horizon is
    accepted once max(|gamma1|, |gamma2|) has stayed below eta * peak from
    the last exceedance up to T, and that quiet stretch is at least
    ``window * T`` long.  The returned value is the end of the quiet window
    rounded to the sampling grid.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    T = 8.0
    while T <= cap:
        tau = np.linspace(0.0, T, samples + 1)
        v = np.zeros((2, tau.size))
        v[:, 1:] = integrate(tau[1:], rp, tol)[:2]
        mag = np.max(np.abs(v), axis=0)
        peak = float(mag.max())
        if peak == 0.0:
            return float(tau[64])
        loud = np.nonzero(mag > eta * peak)[0]
        last = float(tau[loud[-1]]) if loud.size else 0.0
        # the quiet stretch must cover a quarter of the horizon it implies
        horizon = last / (1 - window)
        if horizon <= T - (T / samples) and last > 0:
            return float(tau[min(int(np.ceil(horizon / T * samples)), samples)])
        T *= 2
    raise HorizonNotFound(f"rates still above {eta:g} of peak at tau = {cap:g}")
