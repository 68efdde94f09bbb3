"""Exception types raised across the package."""


class RssError(Exception):
    """Base class for all model errors."""


class ConstraintViolation(RssError):
    """A scene parameter violates one of the placement constraints."""


class NonPositiveArea(RssError):
    """A scatterer region has zero or negative area."""


class NonPositiveFrequency(RssError):
    """Carrier or Doppler frequency scale is not positive."""


class CoincidentPoint(RssError):
    """Angle of a point requested at the observer's own position."""


class DegenerateGeometry(RssError):
    """A geometry constant has a vanishing denominator."""


class UnsupportedRegime(RssError):
    """Scene falls outside the regimes the closed-form supports cover."""


class ParallelRays(RssError):
    """Departure and arrival rays are parallel; no unique intersection."""


class OutOfBand(RssError):
    """Requested Doppler frequency is outside the reachable band."""


class QuadratureFailure(RssError):
    """Adaptive quadrature could not meet the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class InsufficientLength(RssError):
    """Gain series too short for the requested spectral resolution."""


class DegenerateBins(RssError):
    """Histogram bins cannot be pooled up to the minimum expected count."""


class NonUniformGrid(RssError):
    """Measured spectrum grid is not uniformly spaced and increasing."""


class EmptyInput(RssError):
    """No usable rows found in an input file."""


class NegativeDensity(RssError):
    """Measured spectrum contains negative density values."""


class Infeasible(RssError):
    """No parameter vector satisfied the fit constraints."""


class MaxIterations(RssError):
    """Optimizer stopped on its iteration budget without converging."""
