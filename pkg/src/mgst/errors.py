"""Exception hierarchy for mgst."""


class MgstError(Exception):
    """Base class for every error raised by this package."""


class IoError(MgstError, OSError):
    """A file could not be read or written."""


class PairMismatch(MgstError, ValueError):
    """Image and mask dimensions disagree."""


class UnknownLabel(MgstError, ValueError):
    """A mask contains a label value that the channel map does not cover."""


class FormatError(MgstError, ValueError):
    """A weights file is malformed."""


class IndivisibleDims(MgstError, ValueError):
    """Image dimensions are not divisible by the network's total pooling factor."""


class ShapeMismatch(MgstError, ValueError):
    """Arrays passed to an operation have incompatible shapes."""


class NonFiniteLoss(MgstError, FloatingPointError):
    """The objective evaluated to NaN or infinity."""

    def __init__(self, message, last_good_iteration=None):
        super().__init__(message)
        self.last_good_iteration = last_good_iteration


class LineSearchFailed(MgstError, RuntimeError):
    """Backtracking exhausted its budget without satisfying the Armijo test."""


class EmptyRegion(MgstError, ValueError):
    """A mask channel selected for a measurement has zero mass."""
