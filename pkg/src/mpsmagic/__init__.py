"""Stabilizer Renyi entropies and long-range magic of spin-1 chains from MPS."""

__version__ = "0.1.0"

from .dmrg import DmrgResult, DmrgSettings, dmrg_ground_state
from .markov import (
    MarkovConfig,
    estimate_long_range_magic,
    estimate_mutual_info2,
    estimate_sre_markov,
    estimate_w,
    run_chain,
)
from .model import ModelParams, build_mpo, critical_point_presets, exact_diagonalization, preset
from .mps import (
    MatrixProductState,
    Partition,
    canonicalize,
    compress,
    entanglement_entropy,
    ghz_state,
    mutual_info_renyi2_exact,
    product_state,
    random_mps,
    renyi2_entropy_exact,
)
from .pauli import PauliString, QuditAlgebra, brute_force_long_range_magic, brute_force_sre
from .pauli_mps import PauliMPS, long_range_magic_pauli_mps, reduced_pauli_mps, sre_replica, to_pauli_mps
from .perfect import Estimate, estimate_sre, sample_pauli_strings
from .stats import corrected_std_error, integrated_autocorr_time

__all__ = [
    "__version__",
    "DmrgResult",
    "DmrgSettings",
    "dmrg_ground_state",
    "MarkovConfig",
    "estimate_long_range_magic",
    "estimate_mutual_info2",
    "estimate_sre_markov",
    "estimate_w",
    "run_chain",
    "ModelParams",
    "build_mpo",
    "critical_point_presets",
    "exact_diagonalization",
    "preset",
    "MatrixProductState",
    "Partition",
    "canonicalize",
    "compress",
    "entanglement_entropy",
    "ghz_state",
    "mutual_info_renyi2_exact",
    "product_state",
    "random_mps",
    "renyi2_entropy_exact",
    "PauliString",
    "QuditAlgebra",
    "brute_force_long_range_magic",
    "brute_force_sre",
    "PauliMPS",
    "long_range_magic_pauli_mps",
    "reduced_pauli_mps",
    "sre_replica",
    "to_pauli_mps",
    "Estimate",
    "estimate_sre",
    "sample_pauli_strings",
    "corrected_std_error",
    "integrated_autocorr_time",
]
