"""Floquet scattering and effective non-Hermitian couplings of a two-site
time-modulated resonator chain."""

__version__ = "0.1.0"

from .model import ChainModel, Modulation, SiteParams, Truncation, build_chain, symmetric_chain, table_s1_chain
from .floquet import scattering_matrix, banded_solve, spectrum
from .hn import alpha_first_order, hn_couplings

__all__ = [
    "ChainModel",
    "Modulation",
    "SiteParams",
    "Truncation",
    "build_chain",
    "symmetric_chain",
    "table_s1_chain",
    "scattering_matrix",
    "banded_solve",
    "spectrum",
    "alpha_first_order",
    "hn_couplings",
]
