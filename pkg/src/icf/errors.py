"""Exception hierarchy shared across the package."""


class IcfError(Exception):
    """Base class for all package errors."""


class ConfigurationError(IcfError):
    """Invalid configuration: bad function spec, grid sizes, alpha range, ..."""


class DomainError(IcfError):
    """Curvature-function argument outside the positive cone."""


class StateInvalidError(IcfError):
    """Support state violates an ambient-domain invariant (e.g. hyperbolic ball)."""

    def __init__(self, message, node=None, t=None):
        super().__init__(message)
        self.node = node
        self.t = t


class ConvexityLostError(IcfError):
    """Radii matrix stopped being positive definite somewhere."""

    def __init__(self, message, node=None, t=None):
        super().__init__(message)
        self.node = node
        self.t = t
