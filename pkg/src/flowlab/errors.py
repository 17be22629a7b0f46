"""Exception types shared across the package.

Every failure mode that callers are expected to handle gets its own class;
generic misuse raises the usual ValueError/TypeError.
"""


class FlowLabError(Exception):
    """Base class for all package-specific errors."""


class BoundaryMarginError(FlowLabError):
    """A finite-difference stencil would leave the field's declared box."""


class ResolutionError(FlowLabError):
    """A grid is too coarse to resolve the requested kernel scale."""


class UnknownPresetError(FlowLabError):
    """Requested preset name is not in the catalogue."""


class ParameterError(FlowLabError):
    """A preset or config parameter is outside its admissible range."""


class EscapeError(FlowLabError):
    """A trajectory left the declared box during integration.

    Carries the first exit time and, for cloud integrations, the index of
    the offending point.
    """

    def __init__(self, message, exit_time=None, index=None):
        super().__init__(message)
        self.exit_time = exit_time
        self.index = index


class CapabilityError(FlowLabError):
    """An operation needs field data (Jacobian, divergence) that is absent."""


class BoundViolationError(FlowLabError):
    """A transported density left its Gronwall envelope.

    Carries the worst offending sample as ``(t, value, bound)``.
    """

    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst


class CoverageError(FlowLabError):
    """A quadrature cloud does not cover the support of a test function."""


class NumericError(FlowLabError):
    """A computation produced a non-finite or inadmissible value."""


class InvalidInputError(FlowLabError):
    """A precondition on the inputs of a weak-form check failed."""
