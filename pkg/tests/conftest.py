import functools

import numpy as np
import pytest

from dephasim.params import default_params, reduce
from dephasim.spectral import auto_horizon, build_table


@functools.cache
def reduced(aB: float, d: float):
    return reduce(default_params(a_B_over_aRb=aB, D_over_L=d))


@functools.cache
def horizon(aB: float, d: float, eta: float = 1e-4) -> float:
    return auto_horizon(reduced(aB, d), eta)


@functools.cache
def table(aB: float, d: float, tau_max: float | None = None, n_steps: int = 2048,
          tol: float = 1e-10, midpoints: bool = False):
    """Tables are expensive; share them across test modules."""
    T = horizon(aB, d) if tau_max is None else tau_max
    return build_table(reduced(aB, d), T, n_steps, tol, midpoints=midpoints)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_density(rng, dim=4, rank=None):
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


# -- acceptance summary -----------------------------------------------------

_criteria: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, label = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _criteria[number] = (label, rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        label, ok = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {label}")
