"""Koopman-mode parametrization of nonlinear normal modes for polynomial systems."""
from .dynamics import (
    IntegratorConfig,
    Trajectory,
    integrate,
    nmse,
    order_decomposition,
    spectral_trajectory,
)
from .estimator import KoopmanNNM
from .exceptions import (
    ContractError,
    DefectiveJacobianError,
    DegenerateReferenceError,
    DivergentExpansionError,
    InternalConsistencyError,
    KoopNNMError,
    NotOnManifoldError,
    ResonanceError,
    StiffnessError,
    UnstableEquilibriumError,
)
from .koopman import KoopmanModeTable, compute_identity_modes
from .manifold import (
    detect_fold,
    eval_psi,
    invert_point,
    pde_residual,
    sample_mesh,
    validity_radius,
)
from .models import AppendixBFamily, TwoDofParams, build_2dof_cubic, build_chain
from .polyfield import PolynomialVectorField
from .spectral import SpectralDecomposition, check_resonance, decompose

__version__ = "0.1.0"
