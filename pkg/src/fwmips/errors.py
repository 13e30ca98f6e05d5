"""Exception hierarchy shared by every fwmips module."""


class FwmipsError(Exception):
    """Base class for library errors."""


class DimensionError(FwmipsError, ValueError):
    """Operands disagree on dimension."""


class NonFiniteError(FwmipsError, ValueError):
    """A vector contains NaN or Inf."""


class RadiusError(FwmipsError, ValueError):
    """A vector is longer than the radius used to normalise it."""


class NormError(FwmipsError, ValueError):
    """A vector that must lie on the unit sphere does not."""


class NotInHullError(FwmipsError, ValueError):
    """Convex-combination weights do not describe the claimed point."""


class ConfigError(FwmipsError, ValueError):
    """A parameter is outside its documented range."""


class EmptyIndexError(FwmipsError, LookupError):
    """A query was issued against an index with no live points."""


class StallError(FwmipsError, RuntimeError):
    """The solver halved its threshold too many times in a row."""


class CalibrationError(FwmipsError, RuntimeError):
    """A calibration sweep could not reach its target.

    ``best`` holds the best value achieved for each target that was missed.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = dict(best or {})
