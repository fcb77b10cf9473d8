"""Exception hierarchy shared by all gmclab modules."""


class GmcLabError(Exception):
    """Base class for every error raised by gmclab."""


class ConfigurationError(GmcLabError, ValueError):
    """Invalid parameters or incompatible settings, detected before any sampling."""


class DomainError(GmcLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SamplerError(GmcLabError, RuntimeError):
    """Circulant embedding failed to produce a nonnegative spectrum."""


class ResourceError(GmcLabError, RuntimeError):
    """The requested computation exceeds the supported envelope."""


class StatisticsError(GmcLabError, ValueError):
    """Too few samples, or otherwise degenerate input to an estimator."""


class CoverageError(GmcLabError, RuntimeError):
    """A sampling domain is too small for the quantity being integrated."""


class PartialResultError(GmcLabError, RuntimeError):
    """A replicate failed; ``completed`` holds the number of finished replicates."""

    def __init__(self, message, completed):
        super().__init__(message)
        self.completed = completed
