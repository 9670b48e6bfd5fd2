"""Albedo operator of linear transport in a ball: forward decomposition,
Monte Carlo oracle, reconstruction of absorption and scattering, and
numerical stability checks."""

__version__ = "0.1.0"

from .albedo import BeamSpec, apply_albedo, sample_beam
from .coefficients import CoefficientPair, check_admissible, check_subcritical, make_phantom
from .errors import (AdmissibilityError, AlbedoLabError, ConfigError, DomainError, RefusalError,
                     ToleranceError, TruncationError)
from .geometry import DirectionSet, DomainConfig
from .montecarlo import mc_oracle
from .transport import Lattice, solve_neumann

__all__ = [
    "BeamSpec", "apply_albedo", "sample_beam", "CoefficientPair", "check_admissible", "check_subcritical",
    "make_phantom", "AdmissibilityError", "AlbedoLabError", "ConfigError", "DomainError", "RefusalError",
    "ToleranceError", "TruncationError", "DirectionSet", "DomainConfig", "mc_oracle", "Lattice",
    "solve_neumann",
]
