"""Exception types shared across the package."""


class MsflowError(Exception):
    """Base class for solver errors."""


class MeshFormatError(MsflowError):
    """Raised for malformed mesh files or invalid mesh topology."""


class ConfigError(MsflowError):
    """Raised for invalid run configuration files.

    Carries the offending line number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SingularSystemError(MsflowError):
    """Raised when a linear solve fails or leaves a large residual."""
