"""Exception hierarchy shared across the package."""


class NbrgdsError(Exception):
    """Base class for all package errors."""


class ParameterError(NbrgdsError, ValueError):
    """A distribution or model parameter is outside its valid domain."""


class AllocationError(NbrgdsError):
    """Positive count with no positive weight to allocate it to."""


class StructuralError(NbrgdsError):
    """The latent state violates a structural constraint of the model."""


class ConfigError(NbrgdsError, ValueError):
    """Invalid run, mask or schedule configuration."""


class DataFormatError(NbrgdsError, ValueError):
    """Malformed count data on disk."""
