"""Inverse curvature flows of convex hypersurfaces in the three space forms,
simulated through the support-function (Gauss map) parametrization."""

from .errors import (
    ConfigurationError,
    ConvexityLostError,
    DomainError,
    IcfError,
    StateInvalidError,
)

__all__ = [
    "ConfigurationError",
    "ConvexityLostError",
    "DomainError",
    "IcfError",
    "StateInvalidError",
]

__version__ = "0.1.0"
