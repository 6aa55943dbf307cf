class MVTError(Exception):
    """Base class for every error raised by mvtlab."""


class PreconditionError(MVTError, ValueError):
    """An operation was called outside its hypotheses."""


class PrecisionError(PreconditionError):
    """A tolerance is finer than the fixed-point resolution can certify."""


class CapacityError(MVTError):
    """A count would not fit in the configured memory budget."""

    def __init__(self, message, budget=None, estimate=None):
        super().__init__(message)
        self.budget = budget
        self.estimate = estimate


class OracleCeilingError(CapacityError):
    """The brute-force oracle would exceed its enumeration ceiling."""


class LadderCapacityError(CapacityError):
    """A ladder point hit a capacity limit; earlier points are kept."""

    def __init__(self, message, points, budget=None, estimate=None):
        super().__init__(message, budget=budget, estimate=estimate)
        self.points = points


class CacheFormatError(MVTError):
    """A cache file has the wrong magic, version or byte order."""
