"""Exception hierarchy shared by every module.

The CLI maps each class to an exit code and a short reason tag, so callers
should raise the most specific class available.
"""


class P3DError(Exception):
    """Base class for all errors raised by this package."""

    reason = "error"


class DimensionError(P3DError, ValueError):
    """Shapes or extents are incompatible with the requested operation."""

    reason = "dimension"


class ConfigurationError(P3DError, ValueError):
    """A parameter set is invalid (bad stride residue, probability out of range...)."""

    reason = "configuration"


class BoundsError(P3DError, IndexError):
    """A crop or index falls outside the tensor."""

    reason = "range"


class DegenerateInputError(P3DError, ValueError):
    """Input is numerically degenerate, e.g. a zero-norm feature vector."""

    reason = "degenerate"


class DataError(P3DError):
    """Input data cannot be read or is unusable (corrupt file, undersized image)."""

    reason = "data"


class TrainingError(P3DError, ArithmeticError):
    """Optimisation diverged."""

    reason = "training"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
