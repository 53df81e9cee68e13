"""Stochastic homogenization of random elastic microstructures.

A random elasticity field is generated from an uncertain spectral measure and a
maximum-entropy matrix transform, homogenized on the unit cube by trilinear
finite elements, and analyzed by Monte Carlo.
"""

from .fem import (
    EffectiveSample,
    FieldError,
    HexMesh,
    RealizationError,
    SolverError,
    assemble,
    build_mesh,
    homogenize,
    solve_correctors,
)
from .gfield import BLOCKS, NoiseVector, eval_g, eval_g_grid, sample_noise
from .maxent import (
    ElasticityField,
    HTransformError,
    InadmissibleConstantsError,
    MatrixFieldParams,
    MeanElasticity,
    h_transform,
    isotropic_stiffness,
    orthotropic_mean,
)
from .mc import CampaignConfig, CampaignResult, convergence, kde_pdf, prob_band, run_campaign
from .spectral import DimensionlessSdf, SpectrumDistribution, SpectrumParams, build_grid, chi_tilde

__version__ = "0.1.0"

__all__ = [
    "BLOCKS",
    "CampaignConfig",
    "CampaignResult",
    "DimensionlessSdf",
    "EffectiveSample",
    "ElasticityField",
    "FieldError",
    "HTransformError",
    "HexMesh",
    "InadmissibleConstantsError",
    "MatrixFieldParams",
    "MeanElasticity",
    "NoiseVector",
    "RealizationError",
    "SolverError",
    "SpectrumDistribution",
    "SpectrumParams",
    "assemble",
    "build_grid",
    "build_mesh",
    "chi_tilde",
    "convergence",
    "eval_g",
    "eval_g_grid",
    "h_transform",
    "homogenize",
    "isotropic_stiffness",
    "kde_pdf",
    "orthotropic_mean",
    "prob_band",
    "run_campaign",
    "sample_noise",
    "solve_correctors",
    "__version__",
]
