"""Exception types shared across the package."""


class OpenChainError(Exception):
    """Base class for all package errors."""


class DimensionError(OpenChainError, ValueError):
    pass


class DomainError(OpenChainError, ValueError):
    """Raised when a formula or oracle is used outside its validity range."""


class ConfigError(OpenChainError, ValueError):
    """Invalid or inconsistent configuration.

    ``key`` names the offending parameter when one can be identified.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class IntegrationDiverged(OpenChainError, FloatingPointError):
    """A trajectory left the finite range; usually the time step is too large."""

    def __init__(self, message, trajectory_index=None):
        super().__init__(message)
        self.trajectory_index = trajectory_index


class CutoffTooSmall(OpenChainError, RuntimeError):
    """Fock-space truncation carries non-negligible population in its top levels."""


class WindowTooShort(OpenChainError, ValueError):
    pass
