"""Exception types raised by the library.

Every failure of a documented precondition maps to one of these, so callers
can distinguish bad inputs from genuine numerical breakdowns.
"""


class KPCAError(Exception):
    """Base class for all library errors."""


class RankDeficient(KPCAError):
    """Matrix does not have full row rank (smallest/largest singular value <= 1e-12)."""


class NotSymmetric(KPCAError):
    """Symmetric eigendecomposition requested for a non-symmetric matrix."""


class ConvergenceFailure(KPCAError):
    """An iterative kernel failed its own residual verification."""


class NotOrthonormal(KPCAError):
    """Operation requires a matrix with orthonormal rows."""


class DimensionMismatch(KPCAError):
    """Operand shapes are incompatible."""


class NonFinite(KPCAError):
    """Input contains NaN or infinity."""


class EmptyDataSet(KPCAError):
    """Dataset has no samples."""


class ZeroSignal(KPCAError):
    """Head eigenvalue mass is zero, so a noise-to-signal ratio is undefined."""


class InvalidSpec(KPCAError):
    """Synthetic covariance specification violates its own constraints."""


class FormatError(KPCAError):
    """File does not conform to the documented dataset format."""


class InvalidInputs(KPCAError):
    """Numeric inputs violate the documented domain of an operation."""


class InsufficientTrials(KPCAError):
    """Monte Carlo check requested with too few trials to be meaningful."""


class NotGuaranteedRate(KPCAError):
    """Trace was not produced with the guaranteed learning rate for these inputs."""
