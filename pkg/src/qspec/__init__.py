"""Band structure, density of states and Hölder exponents for Sturmian Schrödinger operators.

    (H u)(n) = u(n+1) + u(n-1) + V(n) u(n),   V(n) = lambda (floor((n+1) beta) - floor(n beta)),

with beta given by its continued fraction.  Modules: :mod:`~qspec.contfrac`
(expansions and convergents), :mod:`~qspec.schrodinger` (potential, Sturm
counts), :mod:`~qspec.tracemap` (trace recursion), :mod:`~qspec.bands`
(generating-band tree), :mod:`~qspec.dos`, :mod:`~qspec.holder`,
:mod:`~qspec.verify` and the :mod:`~qspec.cli`.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .bands import Band, BandTree, build_generating_tree, enumerate_bands, polish_endpoints, verify_tree
from .contfrac import CFExpansion, cf_statistics, cf_value, convergents, denominators, parse_cf
from .dos import DOSApprox, dos_compare, dos_direct, dos_from_bands
from .errors import (
    ClassificationError, CoefficientsExhausted, CountMismatch, PrecisionExhausted, QspecError, ValidationError,
)
from .holder import (
    dichotomy_check, empirical_exponents, gamma_k_sequence, gamma_lower, gamma_upper, holder_report,
)
from .schrodinger import ModelParams, eig_count_interval, potential, restriction, sturm_count_below
from .tracemap import state_at, trace_degree, trace_x

__all__ = [
    "__version__", "Band", "BandTree", "build_generating_tree", "enumerate_bands", "polish_endpoints",
    "verify_tree", "CFExpansion", "cf_statistics", "cf_value", "convergents", "denominators", "parse_cf",
    "DOSApprox", "dos_compare", "dos_direct", "dos_from_bands", "ClassificationError",
    "CoefficientsExhausted", "CountMismatch", "PrecisionExhausted", "QspecError", "ValidationError",
    "dichotomy_check", "empirical_exponents", "gamma_k_sequence", "gamma_lower", "gamma_upper",
    "holder_report", "ModelParams", "eig_count_interval", "potential", "restriction",
    "sturm_count_below", "state_at", "trace_degree", "trace_x",
]
