"""Exact two-qubit dephasing map and a brute-force master-equation integrator.

The map is diagonal in the computational basis (|00>, |01>, |10>, |11>):
every density-matrix element is multiplied by ``exp(-Lambda_ij)`` where the
exponent matrix ``Lambda`` depends only on the pair (Gamma0, delta).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import DecoherenceTable

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = -1e-10

# sigma_z of qubit A and qubit B as diagonals in the computational basis
SZ_A = np.array([1.0, 1.0, -1.0, -1.0])
SZ_B = np.array([1.0, -1.0, 1.0, -1.0])

# exponent pattern: Lambda = Gamma0 * _SINGLE + (2 Gamma0 + delta) * _PHI + (2 Gamma0 - delta) * _PSI
_SINGLE = np.array([
    [0, 1, 1, 0],
    [1, 0, 0, 1],
    [1, 0, 0, 1],
    [0, 1, 1, 0],
], dtype=float)
_PHI = np.zeros((4, 4))
_PHI[0, 3] = _PHI[3, 0] = 1.0
_PSI = np.zeros((4, 4))
_PSI[1, 2] = _PSI[2, 1] = 1.0


class InvalidState(ValueError):
    """Matrix is not a valid density matrix within tolerance."""


class StepTooLarge(ValueError):
    """Time grid too coarse for the fixed-step integrator."""


def check_density(m: np.ndarray, dim: int | None = None) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidState(f"expected a square matrix, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise InvalidState(f"expected a {dim}x{dim} matrix, got {m.shape}")
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
        raise InvalidState("matrix is not Hermitian")
    if abs(np.trace(m) - 1) > TRACE_TOL:
        raise InvalidState(f"trace is {np.trace(m).real:.15g}, not 1")
    if np.linalg.eigvalsh(m).min() < POSITIVITY_TOL:
        raise InvalidState("matrix has a negative eigenvalue")
    return m


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Immutable density matrix; validated on construction."""

    data: np.ndarray
    DIM = None

    def __post_init__(self):
        m = check_density(self.data, self.DIM).copy()
        m.setflags(write=False)
        object.__setattr__(self, "data", m)

    @classmethod
    def from_ket(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.data @ self.data)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)

    def __eq__(self, other):
        return isinstance(other, DensityMatrix) and np.array_equal(self.data, other.data)

    __hash__ = None


class DensityMatrix4(DensityMatrix):
    """Two-qubit state in the basis (|00>, |01>, |10>, |11>)."""

    DIM = 4


class DensityMatrix2(DensityMatrix):
    """Single-qubit state."""

    DIM = 2


@dataclass(frozen=True)
class DephasingExponents:
    """Decoherence functions (Gamma0, delta) at one time."""

    Gamma0: float
    delta: float

    def __sub__(self, other: "DephasingExponents") -> "DephasingExponents":
        return DephasingExponents(self.Gamma0 - other.Gamma0, self.delta - other.delta)

    def __add__(self, other: "DephasingExponents") -> "DephasingExponents":
        return DephasingExponents(self.Gamma0 + other.Gamma0, self.delta + other.delta)

    @property
    def gamma_phi(self) -> float:
        """Exponent of the |00><11| coherence."""
        return 2 * self.Gamma0 + self.delta

    @property
    def gamma_psi(self) -> float:
        """Exponent of the |01><10| coherence."""
        return 2 * self.Gamma0 - self.delta


def exponent_matrix(Gamma0, delta) -> np.ndarray:
    """Lambda_ij for scalar or array inputs; shape (..., 4, 4)."""
    g = np.asarray(Gamma0, dtype=float)[..., None, None]
    dl = np.asarray(delta, dtype=float)[..., None, None]
    return g * _SINGLE + (2 * g + dl) * _PHI + (2 * g - dl) * _PSI


def _as_array(rho, dim: int) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        if rho.data.shape[0] != dim:
            raise InvalidState(f"expected a {dim}x{dim} state")
        return rho.data
    return check_density(rho, dim)


def apply_two_qubit(rho0, e: DephasingExponents) -> DensityMatrix4:
    """Evolve a two-qubit state through the dephasing map with exponents ``e``."""
    m = _as_array(rho0, 4)
    return DensityMatrix4(m * np.exp(-exponent_matrix(e.Gamma0, e.delta)))


def apply_single_qubit(rho0, Gamma0: float) -> DensityMatrix2:
    m = _as_array(rho0, 2)
    f = np.exp(-Gamma0)
    return DensityMatrix2(m * np.array([[1.0, f], [f, 1.0]]))


def evolve_many(rho0, Gamma0, delta) -> np.ndarray:
    """States at many times at once: returns an array of shape (n, 4, 4)."""
    m = rho0.data if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    return m[None, :, :] * np.exp(-exponent_matrix(Gamma0, delta))


def evolve_table(rho0, table: DecoherenceTable) -> np.ndarray:
    return evolve_many(rho0, table.Gamma0, table.delta)


def intermediate_factor_matrix(e1: DephasingExponents, e2: DephasingExponents) -> np.ndarray:
    """Hadamard factor of the map from the time of ``e1`` to the time of ``e2``.

    The intermediate map acts as rho -> M * rho (element-wise) and is
    completely positive exactly when M is positive semidefinite.
    """
    return np.exp(-(exponent_matrix(e2.Gamma0, e2.delta) - exponent_matrix(e1.Gamma0, e1.delta)))


def is_completely_positive(M: np.ndarray, tol: float = POSITIVITY_TOL) -> bool:
    return bool(np.linalg.eigvalsh(M).min() >= tol)


# -- master-equation oracle -------------------------------------------------

_L_SUM = np.diag(SZ_A + SZ_B).astype(complex)
_L_DIFF = np.diag(SZ_A - SZ_B).astype(complex)


def _dissipator(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    LdL = L.conj().T @ L
    return L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)


def master_equation_rhs(rho: np.ndarray, g1: float, g2: float) -> np.ndarray:
    """Right-hand side of the time-local master equation with rates gamma1, gamma2."""
    return (0.5 * (g1 - g2) * _dissipator(_L_DIFF, rho)
            + 0.5 * (g1 + g2) * _dissipator(_L_SUM, rho))


def rk4_evolve(rho0, table: DecoherenceTable, max_step_rate: float = 0.1) -> np.ndarray:
    """Classical RK4 on the master equation along the table's time grid.

    Rates at the half steps are the table's midpoint samples when present,
    otherwise linear interpolation between grid values.  ``rho0`` may be a
    single state or a stack of shape (m, 4, 4), integrated together.

    Returns:
        array (n_times, 4, 4), or (n_times, m, 4, 4) for a stack, with the
        state at every grid time.

    Raises:
        StepTooLarge: if step * max(|gamma1| + |gamma2|) >= ``max_step_rate``.
    """
    if isinstance(rho0, DensityMatrix) or np.ndim(rho0) == 2:
        rho = _as_array(rho0, 4).copy()
    else:
        rho = np.array([check_density(r, 4) for r in rho0])
    tau = table.tau_grid
    g1, g2 = table.gamma1, table.gamma2
    if table.gamma1_mid is not None and table.gamma2_mid is not None:
        m1, m2 = table.gamma1_mid, table.gamma2_mid
    else:
        m1, m2 = 0.5 * (g1[1:] + g1[:-1]), 0.5 * (g2[1:] + g2[:-1])
    h_max = float(np.max(np.diff(tau)))
    rate_max = float(np.max(np.abs(g1) + np.abs(g2)))
    if h_max * rate_max >= max_step_rate:
        raise StepTooLarge(f"step {h_max:.3g} x rate {rate_max:.3g} >= {max_step_rate}")
    out = np.empty((tau.size,) + rho.shape, dtype=complex)
    out[0] = rho
    for i in range(tau.size - 1):
        h = tau[i + 1] - tau[i]
        k1 = master_equation_rhs(rho, g1[i], g2[i])
        k2 = master_equation_rhs(rho + 0.5 * h * k1, m1[i], m2[i])
        k3 = master_equation_rhs(rho + 0.5 * h * k2, m1[i], m2[i])
        k4 = master_equation_rhs(rho + h * k3, g1[i + 1], g2[i + 1])
        rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = rho
    return out


def rk4_single_qubit(rho0, tau: np.ndarray, g1: np.ndarray, g1_mid: np.ndarray) -> np.ndarray:
    """RK4 for one qubit dephasing at rate gamma1: L = sigma_z, rate gamma1."""
    sz = np.diag([1.0, -1.0]).astype(complex)
    rho = _as_array(rho0, 2).copy()
    out = np.empty((tau.size, 2, 2), dtype=complex)
    out[0] = rho

    def rhs(r, g):
        return g * _dissipator(sz, r)

    for i in range(tau.size - 1):
        h = tau[i + 1] - tau[i]
        k1 = rhs(rho, g1[i])
        k2 = rhs(rho + 0.5 * h * k1, g1_mid[i])
        k3 = rhs(rho + 0.5 * h * k2, g1_mid[i])
        k4 = rhs(rho + h * k3, g1[i + 1])
        rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = rho
    return out


# -- named states -----------------------------------------------------------

def bell_state(name: str) -> DensityMatrix4:
    """One of 'phi+', 'phi-', 'psi+', 'psi-'; psi uses (|10> +- |01>)/sqrt(2)."""
    kets = {
        "phi+": [1, 0, 0, 1],
        "phi-": [1, 0, 0, -1],
        "psi+": [0, 1, 1, 0],
        "psi-": [0, -1, 1, 0],
    }
    return DensityMatrix4.from_ket(kets[name])
