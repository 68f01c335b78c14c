"""Exception types shared across the package."""


class FinslerError(Exception):
    """Base class for all package errors."""


class ZeroVector(FinslerError):
    """Tangent vector too short to evaluate the norm on."""


class NonPositiveNorm(FinslerError):
    """The candidate norm returned a non-positive value."""


class NotStronglyConvex(FinslerError):
    """The fundamental tensor failed positive definiteness."""


class WindTooStrong(FinslerError):
    """Navigation wind with h-norm >= 1 somewhere."""


class OriginNotInOverlap(FinslerError):
    """Chart transition requested at the chart origin."""


class SingularSystem(FinslerError):
    """Linear solve for spray coefficients failed."""


class InconsistentStructure(FinslerError):
    """Structure-equation expansion produced an inconsistent coefficient."""


class IntegratorFailure(FinslerError):
    """Adaptive step size underflowed."""


class ChartEscape(FinslerError):
    """Trajectory left the valid region of both charts (internal error)."""


class NotConstantCurvature(FinslerError):
    """An operation gated on K = 1 saw curvature drift."""


class RefocusingFailure(FinslerError):
    """Geodesics from one point failed to refocus at distance pi."""


class NonOrientedFiber(FinslerError):
    """The fiber component of the rotation form changed sign."""


class NotPeriodic(FinslerError):
    """The geodesic flow failed to close up at period 2*pi."""


class NotGeodesicallyReversible(FinslerError):
    """Reversal operation requested on a non-reversible structure."""


class FixedPointCountMismatch(FinslerError):
    """Fixed point search found a basin count other than two."""


class ConfigParseError(FinslerError):
    """Malformed metric or experiment configuration."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class MetricValidationError(FinslerError):
    """Metric failed the load-time validation grid."""


class MissingSeries(FinslerError):
    """Requested plot series is absent from the report."""
