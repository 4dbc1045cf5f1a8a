"""Closed-form and diagnostic computations: torus toy model, percolation coupling, spin waves."""
from .percolation import (
    P_C,
    FloorDecomposition,
    PercolationReport,
    channel_floor_decomposition,
    coupled_z2_observations,
    percolation_probe,
)
from .spinwave import (
    NonrecoveryBound,
    PsiTable,
    QuadratureError,
    SpinWaveReport,
    nonrecovery_bound,
    psi,
    psi_quadratic_check,
    spin_profile,
    spin_wave_profile,
)
from .toy import ToyModelResult, laplacian_modes, toy_mse, toy_mse_closed_form_1d, toy_mse_empirical
