"""
discrete-cbo - time-discrete consensus-based optimization.

Particles move toward a Gibbs-weighted consensus point under the generalized
one-step update X_{n+1} = X_n - (gamma + eta_n)(X_n - consensus_n), with the noise
eta_n shared by all particles. The package provides:

- the update, the run loop and replay checks of the exact pairwise identities
- noise schemes for three discretizations of the continuous model
- stability classification and Monte-Carlo moment estimators
- Laplace-principle estimates and error certificates toward the global minimum
- a seeded experiment CLI writing versioned CSV and JSON artifacts
"""

__version__ = "1.0.0"

from .certificates import (
    CertificateResult,
    check_laplace_certificate,
    check_support_certificate,
    empirical_error,
    laplace_estimate,
    well_preparedness,
)
from .config import ExperimentConfig, parse_config
from .dynamics import RunConfig, RunResult, replay_check, run, step
from .ensemble import Ensemble, gibbs_consensus, gibbs_weights
from .errors import CBOError
from .laws import InitialLaw, initial_ensemble
from .noise import NoiseKind, NoiseScheme, NoiseStream, generic_scheme, make_scheme, sample_eta
from .objectives import BUILTIN_NAMES, Objective, builtin, polynomial, validate_metadata
from .stability import check_stability, pairwise_moments, slln_statistic, stability_boundary_modelA
from .cli import main

__all__ = [
    "BUILTIN_NAMES",
    "CBOError",
    "CertificateResult",
    "Ensemble",
    "ExperimentConfig",
    "InitialLaw",
    "NoiseKind",
    "NoiseScheme",
    "NoiseStream",
    "Objective",
    "RunConfig",
    "RunResult",
    "builtin",
    "check_laplace_certificate",
    "check_stability",
    "check_support_certificate",
    "empirical_error",
    "generic_scheme",
    "gibbs_consensus",
    "gibbs_weights",
    "initial_ensemble",
    "laplace_estimate",
    "main",
    "make_scheme",
    "pairwise_moments",
    "parse_config",
    "polynomial",
    "replay_check",
    "run",
    "sample_eta",
    "slln_statistic",
    "stability_boundary_modelA",
    "step",
    "validate_metadata",
    "well_preparedness",
    "__version__",
]
