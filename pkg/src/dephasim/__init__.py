"""Two dephasing qubits in a Bose-Einstein condensate environment.

Decay rates from Bogoliubov-mode quadrature, the exact two-qubit dephasing
channel, trace-distance backflow and divisibility diagnostics.
"""
__version__ = "0.1.0"

from .params import PhysicalParams, ReducedParams, InvalidParams, default_params, reduce
from .spectral import (DecoherenceTable, QuadratureFailure, HorizonNotFound, gamma1, gamma2,
                       build_table, auto_horizon)
from .channel import (DensityMatrix2, DensityMatrix4, DephasingExponents, InvalidState,
                      StepTooLarge, apply_single_qubit, apply_two_qubit, bell_state,
                      intermediate_factor_matrix, rk4_evolve)
from .measures import (NmReport, additivity_report, blp_bell_analytic, blp_pair,
                       blp_single_qubit, divisibility, nm_report, trace_distance)
from .sampling import SeededSampler, sample_pair, sampled_scan

__all__ = [
    "PhysicalParams", "ReducedParams", "InvalidParams", "default_params", "reduce",
    "DecoherenceTable", "QuadratureFailure", "HorizonNotFound", "gamma1", "gamma2",
    "build_table", "auto_horizon",
    "DensityMatrix2", "DensityMatrix4", "DephasingExponents", "InvalidState", "StepTooLarge",
    "apply_single_qubit", "apply_two_qubit", "bell_state", "intermediate_factor_matrix",
    "rk4_evolve",
    "NmReport", "additivity_report", "blp_bell_analytic", "blp_pair", "blp_single_qubit",
    "divisibility", "nm_report", "trace_distance",
    "SeededSampler", "sample_pair", "sampled_scan",
]
