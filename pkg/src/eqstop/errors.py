"""Exception hierarchy. Every domain failure raised by the package derives from
:class:`EqstopError`, which the CLI maps to exit code 1."""


class EqstopError(Exception):
    pass


class ModelError(EqstopError):
    """The Markov model violates a structural invariant."""


class ParameterError(EqstopError, ValueError):
    pass


class CapabilityError(EqstopError):
    """A derivative beyond the declared differentiability was requested."""


class IllPosedError(EqstopError):
    pass


class PreconditionError(EqstopError):
    pass


class CapacityError(EqstopError):
    """State space too large for an exhaustive enumeration."""
