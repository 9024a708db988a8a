import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp, mpf, sin as mpsin

from dephasim import spectral
from dephasim.spectral import (DecoherenceTable, HorizonNotFound, QuadratureFailure,
                               auto_horizon, bogoliubov_energy, build_table,
                               cumulative_exponents, gamma1, gamma2, integrate, one_minus_sinc,
                               sinc, spatial_bracket)

from conftest import horizon, reduced, table


def _simpson(y, h):
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def _rate_oracle(tau, rp, which, n=1_000_000):
    """Fixed-grid composite Simpson rule on [0, 8/s], no adaptivity, no series branches."""
    k = np.linspace(0.0, 8 / rp.s, n + 1)[1:]
    e = k * np.sqrt(rp.g_tilde + k**2 / 4)
    env = rp.c_rate * k**2 * np.exp(-(k * rp.s) ** 2 / 2) / (k**2 / 2 + 2 * rp.g_tilde)
    if which == 1:
        spatial = 1 - np.sin(2 * k) / (2 * k)
    else:
        d = rp.d
        spatial = 0.5 * (np.sin(2 * k * (d + 1)) / (2 * k * (d + 1))
                         + np.sin(2 * k * (d - 1)) / (2 * k * (d - 1))
                         - 2 * np.sin(2 * k * d) / (2 * k * d))
    f = np.concatenate([[0.0], env * spatial * np.sin(e * tau / 2) * np.cos(e * tau / 2)])
    return _simpson(f, 8 / rp.s / n)


def test_rates_vanish_at_zero():
    rp = reduced(0.02, 4.0)
    assert gamma1(0.0, rp, 1e-10) == 0.0
    assert gamma2(0.0, rp, 1e-10) == 0.0
    assert np.all(integrate([0.0], rp)[:, 0] == 0.0)


def test_gamma1_simpson_oracle():
    rp = reduced(1.0, 200.0)
    assert gamma1(1.0, rp, 1e-10) == pytest.approx(_rate_oracle(1.0, rp, 1), rel=1e-8)


@pytest.mark.parametrize("aB,d,tau", [(0.02, 4.0, 7.0), (0.5, 20.0, 3.0)])
def test_gamma2_simpson_oracle(aB, d, tau):
    rp = reduced(aB, d)
    got = gamma2(tau, rp, 1e-10)
    want = _rate_oracle(tau, rp, 2)
    scale = abs(gamma1(tau, rp, 1e-10))
    assert abs(got - want) <= 1e-8 * max(abs(want), scale)


def test_gamma1_independent_of_separation():
    taus = np.linspace(0.1, 60, 37)
    a = integrate(taus, reduced(0.5, 4.0), 1e-9, cross=False)[0]
    b = integrate(taus, reduced(0.5, 200.0), 1e-9, cross=False)[0]
    assert np.array_equal(a, b)
    for t in (0.5, 3.0, 40.0):
        assert gamma1(t, reduced(0.5, 4.0)) == gamma1(t, reduced(0.5, 200.0))


def test_sinc_branches_match_high_precision():
    mp.dps = 40
    xs = np.concatenate([np.geomspace(1e-8, 10, 200),
                         [1e-4 * (1 - 1e-12), 1e-4 * (1 + 1e-12), 0.1 * (1 - 1e-12), 0.1 * (1 + 1e-12)]])
    exact = np.array([float(1 - mpsin(mpf(v)) / mpf(v)) for v in xs])
    assert np.allclose(one_minus_sinc(xs), exact, rtol=1e-13, atol=0)
    exact = np.array([float(mpsin(mpf(v)) / mpf(v)) for v in xs])
    assert np.allclose(sinc(xs), exact, rtol=1e-15, atol=0)
    assert sinc(np.array([0.0]))[0] == 1.0
    assert one_minus_sinc(np.array([0.0]))[0] == 0.0


@pytest.mark.parametrize("d", [4.0, 20.0, 200.0])
def test_bracket_small_kappa_series(d):
    mp.dps = 50
    D = mpf(d)

    def bracket(k):
        k = mpf(k)
        return (mpsin(2 * k * (D + 1)) / (2 * k * (D + 1)) + mpsin(2 * k * (D - 1)) / (2 * k * (D - 1))
                - 2 * mpsin(2 * k * D) / (2 * k * D))

    # second derivative at 0 by a symmetric difference; the bracket vanishes at k = 0
    h = mpf("1e-8")
    second = (bracket(h) + bracket(-h)) / h**2
    assert float(second) == pytest.approx(-8 / 3, rel=1e-6)
    ks = np.array([1e-9, 1e-6, 1e-4]) / d
    got = spatial_bracket(ks, d)
    assert np.allclose(got / ks**2, -4 / 3, rtol=1e-6)
    # the production branches agree with the high-precision bracket everywhere
    ks = np.concatenate([np.geomspace(1e-7, 10, 60) / d, [0.25 / (d + 1), 0.2501 / (d + 1)]])
    want = np.array([float(bracket(k)) for k in ks])
    assert np.allclose(spatial_bracket(ks, d), want, rtol=1e-9, atol=1e-16)


def test_bracket_vanishes_at_origin():
    assert spatial_bracket(np.array([0.0]), 10.0)[0] == 0.0


@pytest.mark.parametrize("tol", [1e-6, 1e-8])
def test_halving_tolerance(tol):
    rp = reduced(0.5, 4.0)
    taus = np.array([0.7, 5.0, 30.0, 77.0])
    a = integrate(taus, rp, tol, tau_layout=80.0)
    b = integrate(taus, rp, tol / 2, tau_layout=80.0)
    scale = np.max(np.abs(integrate(np.linspace(0.1, 80, 200), rp, 1e-10)[:2]))
    assert np.all(np.abs(a[:2] - b[:2]) < tol * scale)


def test_quadrature_failure_on_tiny_budget(monkeypatch):
    spectral._EDGE_CACHE.clear()
    monkeypatch.setattr(spectral, "MAX_PANELS", 10)
    with pytest.raises(QuadratureFailure):
        integrate([50.0], reduced(0.5, 4.0), 1e-12)
    spectral._EDGE_CACHE.clear()


def test_integrate_rejects_bad_input():
    rp = reduced(0.5, 4.0)
    with pytest.raises(ValueError):
        integrate([-1.0], rp)
    with pytest.raises(ValueError):
        integrate([1.0], rp, tol=0.0)
    with pytest.raises(ValueError):
        gamma1(-0.1, rp)


def test_table_basic_invariants():
    t = table(0.02, 4.0)
    assert t.tau_grid[0] == 0 and t.Gamma0[0] == 0 and t.delta[0] == 0
    assert t.tau_grid.size == 2049
    assert np.all(np.diff(t.tau_grid) > 0)
    for arr in (t.gamma1, t.gamma2, t.Gamma0, t.delta):
        assert arr.shape == t.tau_grid.shape and np.all(np.isfinite(arr))


def test_table_exponents_match_refined_trapezoid():
    """Analytic inner-time route vs Richardson-refined cumulative trapezoid of the rates."""
    rp = reduced(0.02, 4.0)
    T = horizon(0.02, 4.0)
    t = table(0.02, 4.0)
    coarse = cumulative_exponents(build_table(rp, T, 8 * 2048, 1e-10))
    fine = cumulative_exponents(build_table(rp, T, 16 * 2048, 1e-10))
    g0 = (4 * fine[0][::16] - coarse[0][::8]) / 3
    dl = (4 * fine[1][::16] - coarse[1][::8]) / 3
    assert np.max(np.abs(g0 - t.Gamma0)) <= 1e-6
    assert np.max(np.abs(dl - t.delta)) <= 1e-6


def test_table_cumulative_invariant_at_table_resolution():
    t = table(0.5, 4.0)
    g0, dl = cumulative_exponents(t)
    # trapezoid error bound h^2/12 * int |f''|, generous here
    assert np.max(np.abs(g0 - t.Gamma0)) < 1e-4
    assert np.max(np.abs(dl - t.delta)) < 1e-4


def test_delta_small_for_independent_reservoirs():
    t = table(0.02, 200.0)
    assert np.max(np.abs(t.delta)) <= 1e-5 * np.max(np.abs(t.Gamma0))


def test_gamma2_tiny_at_d500():
    rp = reduced(0.02, 500.0)
    T = horizon(0.02, 500.0)
    v = integrate(np.linspace(T / 4096, T, 4096), rp, 1e-10)
    assert np.max(np.abs(v[1])) <= 1e-6 * np.max(v[0])


def test_gamma2_negative_for_close_qubits():
    assert table(0.02, 4.0).gamma2.min() < 0


def test_gamma1_nonnegative_in_markovian_window():
    assert table(0.02, 200.0).gamma1.min() >= 0


def test_monotonicity_follows_rate_signs():
    for key in ((0.02, 4.0), (0.5, 4.0)):
        t = table(*key)
        dG = np.diff(t.Gamma0)
        dd = np.diff(t.delta)
        up = (t.gamma1[1:] >= 0) & (t.gamma1[:-1] >= 0)
        down = (t.gamma2[1:] <= 0) & (t.gamma2[:-1] <= 0)
        # a cell whose end samples share a sign can still hide a crossing; allow rounding
        assert np.all(dG[up] >= -1e-12)
        assert np.all(dd[down] <= 1e-12)


def test_build_table_argument_checks():
    rp = reduced(0.5, 4.0)
    with pytest.raises(ValueError):
        build_table(rp, 10.0, n_steps=63)
    with pytest.raises(ValueError):
        build_table(rp, 0.0)


def test_table_validation():
    g = np.zeros(5)
    with pytest.raises(ValueError):
        DecoherenceTable(np.linspace(1, 2, 5), g, g, g, g)
    with pytest.raises(ValueError):
        DecoherenceTable(np.linspace(0, 2, 5), g, g, g, np.array([0, 1, np.nan, 0, 0]))


def test_hermite_interpolation_accuracy():
    t = table(0.5, 4.0)
    tq = 0.5 * (t.tau_grid[1:] + t.tau_grid[:-1])[::97]
    tq = tq[tq > 1.0]  # past the initial transient
    g0, dl = t.exponents_interp(tq)
    v = integrate(tq, t.rp, t.tol, tau_layout=t.tau_grid[-1])
    assert np.max(np.abs(g0 - v[2])) < 1e-8
    assert np.max(np.abs(dl - v[3])) < 1e-8


def test_auto_horizon_zero_rates(monkeypatch):
    monkeypatch.setattr(spectral, "integrate", lambda tau, rp, tol=1e-10, **kw: np.zeros((4, np.size(tau))))
    h = auto_horizon(reduced(0.5, 4.0), 1e-4)
    assert 0 < h <= 1.0


def test_auto_horizon_cap_doubling():
    rp = reduced(0.5, 4.0)
    assert auto_horizon(rp, 1e-4, cap=1024) == auto_horizon(rp, 1e-4, cap=2048) == horizon(0.5, 4.0)


def test_auto_horizon_monotone_in_eta():
    assert auto_horizon(reduced(0.5, 4.0), 0.5) <= horizon(0.5, 4.0)


def test_auto_horizon_errors():
    rp = reduced(0.5, 4.0)
    with pytest.raises(HorizonNotFound):
        auto_horizon(rp, 1e-4, cap=16)
    with pytest.raises(ValueError):
        auto_horizon(rp, 1.5)


@settings(max_examples=25, deadline=None)
@given(k=st.floats(1e-6, 50.0), g=st.floats(1e-4, 1.0))
def test_dispersion_inverse(k, g):
    e = bogoliubov_energy(np.array([k]), g)
    assert spectral._kappa_of_energy(e, g)[0] == pytest.approx(k, rel=1e-9)
