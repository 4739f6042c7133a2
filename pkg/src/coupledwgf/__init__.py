"""Coupled Wasserstein gradient flows for strategic classification.

Two interacting populations, a data distribution ρ and an algorithm
distribution μ, follow the Wasserstein gradient flow of a joint energy in
either a cooperative or a competitive (min-max) arrangement. The package
provides measure representations, energy families, particle and
finite-volume solvers, optimal-transport diagnostics, timescale-separated
flows and config-driven scenarios.
"""

from .energy import EnergySpec, Mode, dissipation, eval_energy, rate_constants
from .errors import (
    ConfigError,
    ConvergenceError,
    ConvexityError,
    DivergenceError,
    ExtrapolationError,
    InvalidArgumentError,
    InvalidSeriesError,
    SingularFitError,
    StabilityError,
    UnsupportedRepresentationError,
)
from .measures import DiracState, GridDensity, ParticleEnsemble
from .ot_metrics import fit_rate, w2, wbar

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "ConvexityError",
    "DiracState",
    "DivergenceError",
    "EnergySpec",
    "ExtrapolationError",
    "GridDensity",
    "InvalidArgumentError",
    "InvalidSeriesError",
    "Mode",
    "ParticleEnsemble",
    "SingularFitError",
    "StabilityError",
    "UnsupportedRepresentationError",
    "dissipation",
    "eval_energy",
    "fit_rate",
    "rate_constants",
    "w2",
    "wbar",
]
