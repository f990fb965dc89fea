"""Numerical laboratory for the periodic non-Hermitian Anderson model H_N(g)."""

__version__ = "0.1.0"

from .model import (PotentialSpec, PotentialVector, HatanoNelsonMatrix, ModelError, apply, bernoulli,
                    build_matrix, constant, fixed_potential, sample_potential, uniform)
from .transfer import (BandStructure, TransferProduct, band_structure, char_value, log_norm, real_eigenvalues,
                       spectral_radius_log, svd_factors, transfer_product, transfer_step, verify_rank_one_bound)

__all__ = [
    "PotentialSpec", "PotentialVector", "HatanoNelsonMatrix", "ModelError", "apply", "bernoulli", "build_matrix",
    "constant", "fixed_potential", "sample_potential", "uniform", "BandStructure", "TransferProduct",
    "band_structure", "char_value", "log_norm", "real_eigenvalues", "spectral_radius_log", "svd_factors",
    "transfer_product", "transfer_step", "verify_rank_one_bound",
]
