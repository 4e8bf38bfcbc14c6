"""Exception types shared across the package."""


class SplatforgeError(Exception):
    """Base class for all splatforge errors."""


class PlyParseError(SplatforgeError):
    """Raised when a PLY file cannot be parsed into a Gaussian cloud."""


class ContainerFormatError(SplatforgeError):
    """Raised when a compressed-model container is malformed."""


class ValidationError(SplatforgeError):
    """Raised when scene data violates a structural invariant."""
