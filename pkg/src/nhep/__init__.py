"""Numerics for a symmetry-tunable non-Hermitian spin-1 model.

Exceptional-point analysis via resultants, direct and dilated non-unitary
dynamics, pulse compilation for an NV-center realization, fluorescence
readout inversion and parameter retrieval.
"""
from .core import (ModelParams, NHMatrix, NVLevels, build_hamiltonian, build_nv_levels,
                   build_x_hamiltonian, check_symmetry, spin1_operators)
from .ep import (CubicCoeffs, EPClass, ResultantPair, char_poly, classify_point,
                 dispersion_scan, eigenvalues_cubic, resultants, sweep_sheets,
                 sylvester_resultant, topological_invariant, trace_ep3_locus)

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "NHMatrix", "NVLevels", "build_hamiltonian", "build_nv_levels",
    "build_x_hamiltonian", "check_symmetry", "spin1_operators",
    "CubicCoeffs", "EPClass", "ResultantPair", "char_poly", "classify_point",
    "dispersion_scan", "eigenvalues_cubic", "resultants", "sweep_sheets",
    "sylvester_resultant", "topological_invariant", "trace_ep3_locus",
]
