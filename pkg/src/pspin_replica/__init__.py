"""Finite-N numerics for the replica method in the pure p-spin SK model.

Submodules
----------
core      : the covariance function xi and its companions theta, delta
gaussian  : Gauss-Hermite expectations over (possibly degenerate) Gaussians
rs        : replica-symmetric functional, maximizer and critical points
bounds    : multi-replica bounds psi / Psi, the P-matrix construction, Hoelder gap
oracle    : exact integer moments by lumping configurations into pattern histograms
disorder  : Monte Carlo over Gaussian disorder with exact per-sample enumeration
cli       : batch front-end (``python -m pspin_replica``)
"""

from .core import MixtureSpec, ModelParams, delta, theta, xi, xi_prime
from .errors import (
    BudgetExceeded,
    ConfigError,
    GluingRequired,
    InconsistentGluing,
    InfeasibleConstraint,
    MaxIterations,
    NotPSD,
    ZeroVector,
)

__version__ = "0.1.0"

__all__ = [
    "MixtureSpec",
    "ModelParams",
    "xi",
    "xi_prime",
    "theta",
    "delta",
    "BudgetExceeded",
    "ConfigError",
    "GluingRequired",
    "InconsistentGluing",
    "InfeasibleConstraint",
    "MaxIterations",
    "NotPSD",
    "ZeroVector",
]
