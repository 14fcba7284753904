"""Exception hierarchy shared across the package."""


class VcateError(Exception):
    """Base class for all errors raised by this package."""


class InvalidK(VcateError):
    """Fold count below the minimum of 2."""


class TooFewUnits(VcateError):
    """Not enough observations (or clusters) for the requested fold count."""


class OverlapViolation(VcateError):
    """A propensity score lies outside [delta, 1 - delta]."""


class NonBinaryTreatment(VcateError):
    """A treatment indicator is not 0 or 1."""


class NonFiniteValue(VcateError):
    """A NaN or infinity was found in a data column."""


class EmptyArm(VcateError):
    """A treatment arm has too few units to fit a first-stage model."""


class SingularGram(VcateError):
    """The weighted Gram matrix of the second-stage regression is singular."""


class SingularJ(VcateError):
    """The Jacobian block of the sandwich covariance is singular."""


class DegenerateOmega11(VcateError):
    """The leading entry of the covariance matrix is not positive."""


class GridExhausted(VcateError):
    """The confidence-interval grid cap was reached while still accepting."""


class ParseError(VcateError):
    """A CSV input could not be parsed into a dataset."""


class ConfigError(VcateError):
    """A run configuration is invalid or incomplete."""
