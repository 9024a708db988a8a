"""Physical configuration of the impurity-qubit / condensate system.

Everything downstream works in reduced units: lengths in the lattice
spacing ``L = lambda/4``, energies in ``E0 = hbar^2 / (m_E L^2)`` and times
in ``t0 = hbar / E0``.  :func:`reduce` maps a :class:`PhysicalParams` onto the
handful of dimensionless numbers that the rate integrals depend on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from scipy import constants as _const

HBAR = _const.hbar
BOHR_RADIUS = _const.physical_constants["Bohr radius"][0]
AMU = _const.physical_constants["atomic mass constant"][0]

MASS_RB87_AMU = 86.909180531
MASS_NA23_AMU = 22.9897692820
A_RB = 99 * BOHR_RADIUS

MIN_D_OVER_L = 4.0


class InvalidParams(ValueError):
    """Raised for a physically meaningless or out-of-range configuration."""


@dataclass(frozen=True)
class PhysicalParams:
    """SI-unit description of the experiment.

    Attributes:
        m_E: mass of a condensate boson (kg).
        m_S: mass of the impurity atom carrying the qubit (kg).
        a_E: boson-boson scattering length (m).
        a_SE: impurity-boson scattering length (m).
        n0: condensate density (1/m^3).
        lambda_lattice: superlattice wavelength (m).
        sigma_site: width parameter of a lattice-site wavefunction (m).
        D: half the distance between the two qubits (m).
    """

    m_E: float
    m_S: float
    a_E: float
    a_SE: float
    n0: float
    lambda_lattice: float
    sigma_site: float
    D: float

    @property
    def L(self) -> float:
        return self.lambda_lattice / 4.0

    def validate(self) -> "PhysicalParams":
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidParams(f"{f.name} must be a finite positive number, got {v!r}")
        # relative slack so that D_over_L = 4 survives the float round trip
        if self.D < MIN_D_OVER_L * self.L * (1 - 1e-12):
            raise InvalidParams(
                f"qubit half-separation D = {self.D / self.L:.6g} L is below the minimum of 4 L"
            )
        return self


@dataclass(frozen=True)
class ReducedParams:
    """Dimensionless parameters consumed by the rate integrals.

    Attributes:
        d: qubit half-separation in units of L.
        s: site width in units of L.
        g_tilde: condensate mean-field energy g_E n0 in units of E0.
        c_rate: overall prefactor of the rate integrals (rates in units of 1/t0).
        t0: the time unit hbar/E0 in seconds.
    """

    d: float
    s: float
    g_tilde: float
    c_rate: float
    t0: float

    def __post_init__(self):
        if not self.d >= MIN_D_OVER_L * (1 - 1e-12):
            raise InvalidParams(f"d must be >= 4, got {self.d!r}")
        if not self.s > 0:
            raise InvalidParams(f"s must be positive, got {self.s!r}")
        if not self.g_tilde >= 0:
            raise InvalidParams(f"g_tilde must be nonnegative, got {self.g_tilde!r}")
        if not self.c_rate > 0 or not self.t0 > 0:
            raise InvalidParams("c_rate and t0 must be positive")

    def with_d(self, d: float) -> "ReducedParams":
        return replace(self, d=float(d))


def default_params(
    a_B_over_aRb: float = 1.0,
    D_over_L: float = 200.0,
    sigma_nm: float = 45.0,
) -> PhysicalParams:
    """Na-23 impurities in a Rb-87 condensate, 600 nm lattice, n0 = 1e20 m^-3."""
    lam = 600e-9
    L = lam / 4
    return PhysicalParams(
        m_E=MASS_RB87_AMU * AMU,
        m_S=MASS_NA23_AMU * AMU,
        a_E=a_B_over_aRb * A_RB,
        a_SE=55 * BOHR_RADIUS,
        n0=1e20,
        lambda_lattice=lam,
        sigma_site=sigma_nm * 1e-9,
        D=D_over_L * L,
    )


def reduce(p: PhysicalParams) -> ReducedParams:
    """Nondimensionalize ``p``.

    With kappa = k L the rate integrals become
    ``c_rate * int dkappa kappa^2 exp(-kappa^2 s^2/2) sin(e tau/2) cos(e tau/2)
    / (kappa^2/2 + 2 g_tilde) * (spatial factor)`` where
    ``e(kappa) = sqrt(g_tilde kappa^2 + kappa^4/4)``, and

        g_tilde = 4 pi (a_E/L) (n0 L^3)
        c_rate  = 4 (a_SE/L)^2 (m_E/m_SE)^2 (n0 L^3)
    """
    p.validate()
    L = p.L
    E0 = HBAR**2 / (p.m_E * L**2)
    m_SE = p.m_S * p.m_E / (p.m_S + p.m_E)
    nL3 = p.n0 * L**3
    return ReducedParams(
        d=p.D / L,
        s=p.sigma_site / L,
        g_tilde=4 * math.pi * (p.a_E / L) * nL3,
        c_rate=4 * (p.a_SE / L) ** 2 * (p.m_E / m_SE) ** 2 * nL3,
        t0=HBAR / E0,
    )


# -- config files -----------------------------------------------------------
#
# Grammar: one ``key = value`` per line; blank lines and text after ``#`` are
# ignored; values are Python float literals.  Every key is optional and
# falls back to default_params().

CONFIG_KEYS = (
    "m_E_amu",
    "m_S_amu",
    "a_B_over_aRb",
    "a_SE_over_a0",
    "n0_per_m3",
    "lambda_nm",
    "sigma_nm",
    "D_over_L",
)


def _tidy(v: float) -> float:
    # undo unit-conversion noise such as 45.00000000000001
    return float(f"{v:.15g}")


def to_config(p: PhysicalParams) -> dict[str, float]:
    raw = {
        "m_E_amu": p.m_E / AMU,
        "m_S_amu": p.m_S / AMU,
        "a_B_over_aRb": p.a_E / A_RB,
        "a_SE_over_a0": p.a_SE / BOHR_RADIUS,
        "n0_per_m3": p.n0,
        "lambda_nm": p.lambda_lattice * 1e9,
        "sigma_nm": p.sigma_site * 1e9,
        "D_over_L": p.D / p.L,
    }
    return {k: _tidy(v) for k, v in raw.items()}


def from_config(values: dict[str, float]) -> PhysicalParams:
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise InvalidParams(f"unknown config key(s): {', '.join(unknown)}")
    cfg = to_config(default_params())
    cfg.update({k: float(v) for k, v in values.items()})
    lam = cfg["lambda_nm"] * 1e-9
    p = PhysicalParams(
        m_E=cfg["m_E_amu"] * AMU,
        m_S=cfg["m_S_amu"] * AMU,
        a_E=cfg["a_B_over_aRb"] * A_RB,
        a_SE=cfg["a_SE_over_a0"] * BOHR_RADIUS,
        n0=cfg["n0_per_m3"],
        lambda_lattice=lam,
        sigma_site=cfg["sigma_nm"] * 1e-9,
        D=cfg["D_over_L"] * lam / 4,
    )
    return p.validate()


def parse_config(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise InvalidParams(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in CONFIG_KEYS:
            raise InvalidParams(f"line {lineno}: unknown config key {key!r}")
        if key in out:
            raise InvalidParams(f"line {lineno}: duplicate key {key!r}")
        try:
            out[key] = float(value.strip())
        except ValueError:
            raise InvalidParams(f"line {lineno}: {key} is not a number: {value.strip()!r}") from None
    return out


def load_config(path: str | Path) -> PhysicalParams:
    return from_config(parse_config(Path(path).read_text()))


def format_config(p: PhysicalParams) -> str:
    return "".join(f"{k} = {v!r}\n" for k, v in to_config(p).items())


__all__ = [
    "PhysicalParams",
    "ReducedParams",
    "InvalidParams",
    "default_params",
    "reduce",
    "load_config",
    "parse_config",
    "from_config",
    "to_config",
    "format_config",
    "A_RB",
    "BOHR_RADIUS",
    "AMU",
    "HBAR",
]
