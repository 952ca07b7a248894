"""Passivity and non-expansivity of linear systems without controllability or observability assumptions."""
from .statespace import StateSpaceSystem
from .storage import (GAIN, PASSIVE, NotDissipativeError, QuadraticStorage, SupplyRate,
                      available_energy, lmi_feasibility_check, solve_min_are)
from .polymat import PolyMatrix, PolyPair, is_bounded_real_pair, is_positive_real_pair
from .reduction import run_chain_gain, run_chain_passive, spectral_factor, verify_spectral_factor
from .extract import epsilon_feedback, exact_feedback, simulate_extraction

__all__ = [
    "StateSpaceSystem", "GAIN", "PASSIVE", "NotDissipativeError", "QuadraticStorage",
    "SupplyRate", "available_energy", "lmi_feasibility_check", "solve_min_are", "PolyMatrix",
    "PolyPair", "is_bounded_real_pair", "is_positive_real_pair", "run_chain_gain",
    "run_chain_passive", "spectral_factor", "verify_spectral_factor", "epsilon_feedback",
    "exact_feedback", "simulate_extraction",
]
