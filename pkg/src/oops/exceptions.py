"""Exception hierarchy shared across the package."""


class OOPSError(Exception):
    """Base class for all package errors."""


class DimensionError(OOPSError, ValueError):
    """Vectors, atoms or matrices have incompatible shapes."""


class InputError(OOPSError, ValueError):
    """Input contains non-finite values or violates a precondition."""


class MissingActionsError(InputError):
    """State-action atomization requested on a trajectory without actions."""


class UnsupportedInstanceError(OOPSError, ValueError):
    """The exact solver only handles equal-size uniform instances."""


class SizeError(OOPSError, ValueError):
    """Brute-force enumeration requested on a too-large instance."""


class EpisodeFinishedError(OOPSError, RuntimeError):
    """``step`` called on an environment whose episode is over."""


class DivergenceError(OOPSError, RuntimeError):
    """A learner produced a non-finite loss."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(OOPSError, ValueError):
    """Invalid or unknown configuration key/value."""


class DataError(OOPSError, IOError):
    """Missing or malformed data file."""
