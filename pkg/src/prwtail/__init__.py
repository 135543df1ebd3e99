"""Renewal measures, de Haan integrals and tails of perturbed random walk suprema."""
from .kernels import BACKEND
from .model import (
    FactorLawSpec,
    ModelSpec,
    PerturbationTailSpec,
    BoundedPerturbationSpec,
    TiltedLaw,
    canonical_model,
    compute_rho,
    make_tilted,
    solve_alpha,
    two_point_model,
)
from .sv import SlowlyVaryingSpec, tilde_log

__version__ = "0.1.0"
