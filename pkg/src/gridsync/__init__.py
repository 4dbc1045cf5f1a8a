"""Group synchronization on d-dimensional grids.

Submodules
----------
grid        grid graphs with free or periodic boundary
groups      Z2, U(1) and O(m) elements, projection and misalignment
channels    observation channels, instances and the signal parameter lambda
paths       path-product estimators and intersection-tail diagnostics
multiscale  hierarchical block synchronization for Z2 in two dimensions
gibbs       Nishimori-line Gibbs sampling of the random-bond Ising model
bounds      toy-model MSE, percolation coupling and spin-wave bounds
io          instance files and result tables
experiments config-driven runs, sweeps and manifests
"""
from .grid import Boundary, GridGraph, build_grid
from .groups import GroupElement, Variant
from .channels import (
    DensitySpec,
    Instance,
    OrthGaussian,
    TruthMode,
    U1Multiplicative,
    Z2Flip,
    generate_instance,
    lambda_for_channel,
    verify_unbiasedness,
)

__version__ = "0.1.0"

__all__ = [
    "Boundary",
    "DensitySpec",
    "GridGraph",
    "GroupElement",
    "Instance",
    "OrthGaussian",
    "TruthMode",
    "U1Multiplicative",
    "Variant",
    "Z2Flip",
    "build_grid",
    "generate_instance",
    "lambda_for_channel",
    "verify_unbiasedness",
    "__version__",
]
