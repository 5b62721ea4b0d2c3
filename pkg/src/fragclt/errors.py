"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid measure parameters or experiment configuration."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class EvaluationError(ValueError):
    """A user-supplied function returned a non-finite value."""


class UnsupportedError(NotImplementedError):
    """The requested evaluation path is not implemented."""


class InternalConsistencyError(RuntimeError):
    """A post-condition check failed."""


class TailFailure(RuntimeError):
    """The adaptive tail of an integral did not settle.

    Attributes
    ----------
    partial : object
        The estimate accumulated before giving up.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class FitError(ValueError):
    """Too few points for a least-squares fit."""


class CapacityError(RuntimeError):
    """A configured size cap would be exceeded."""
