"""Exception types shared across the package."""


class NBSpatialError(Exception):
    """Base class for all nbspatial errors."""


class DomainError(NBSpatialError, ValueError):
    """A parameter is outside the domain where the requested quantity exists."""


class BlowupError(NBSpatialError, ArithmeticError):
    """A population value exceeded the overflow threshold (per-cell blow-up).

    Attributes carry the location of the first offending cell when known:
    ``row``/``col`` (lattice coordinates) and ``generation`` (iterate count
    at failure).
    """

    def __init__(self, message, row=None, col=None, generation=None):
        super().__init__(message)
        self.row = row
        self.col = col
        self.generation = generation


class SingularFactorError(NBSpatialError):
    """A QR factor had a (near-)zero diagonal entry: the cocycle lost rank.

    Typically signals a fully extinct subgrid. ``iterate`` is the
    accumulation step at which rank collapsed; the accumulator that raised
    this is poisoned and refuses further use.
    """

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class EmptyAccumulatorError(NBSpatialError):
    """Spectrum requested from an accumulator with zero iterates."""


class NoConvergenceError(NBSpatialError):
    """Newton iteration failed to converge within the iteration budget."""


class SingularJacobianError(NBSpatialError):
    """The Newton linear solve hit a singular Jacobian."""


class CurveNotBracketedError(NBSpatialError):
    """Bisection for a bifurcation curve found no sign change in the probed interval."""


class TooFewSamplesError(NBSpatialError, ValueError):
    """Bimodality statistic requested for fewer than four samples."""


class SnapshotFormatError(NBSpatialError, ValueError):
    """A lattice snapshot file is malformed or has an unsupported version."""
