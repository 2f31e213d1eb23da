"""Collective electron transfer of donor-acceptor pairs in a lossy cavity.

The package computes the instantaneous transfer rate after adiabatic
elimination of the photon and the excited pair states, decomposes it into
cavity-driven and individually-driven channels, simulates the resulting
jump process for very large pair numbers, and cross-validates everything
against full quantum-trajectory and dense master-equation references.
"""

from .model import ModelParams, ParameterError, collective_coupling, params_from_dict, validate
from .rates import RateBreakdown, RateTable, rate_table, transfer_rate
from .spectra import BrightEigensystem, DarkEigensystem, ExceptionalPointError

__all__ = [
    "ModelParams",
    "ParameterError",
    "RateBreakdown",
    "RateTable",
    "BrightEigensystem",
    "DarkEigensystem",
    "ExceptionalPointError",
    "collective_coupling",
    "params_from_dict",
    "rate_table",
    "transfer_rate",
    "validate",
]
