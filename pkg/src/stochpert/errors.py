class StochPertError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(StochPertError, ValueError):
    """Invalid or unknown configuration value."""


class NumericalError(StochPertError, ArithmeticError):
    """A numerical procedure failed to deliver a trustworthy result."""


class EigenSolveError(NumericalError):
    pass


class RootFindingError(NumericalError):
    pass


class ProbeSearchError(NumericalError):
    """The probe multi-index search hit its doubling cap.

    ``log_margin`` is the best log-ratio achieved between the two sides of the
    dominance inequality (positive means satisfied).
    """

    def __init__(self, message, log_margin):
        super().__init__(message)
        self.log_margin = log_margin
