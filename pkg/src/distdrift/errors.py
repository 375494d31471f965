"""Exception hierarchy shared by all modules."""


class DistDriftError(Exception):
    """Base class for every error raised by the package."""


class CoefficientError(DistDriftError, ValueError):
    pass


class UnsupportedRepresentation(DistDriftError, TypeError):
    pass


class ScaleOverflow(DistDriftError, OverflowError):
    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class OutOfRange(DistDriftError, ValueError):
    pass


class BadAnchor(DistDriftError, ValueError):
    pass


class NoConvergence(DistDriftError, RuntimeError):
    def __init__(self, message, residual=None, x1=None):
        super().__init__(message)
        self.residual = residual
        self.x1 = x1


class IllConditioned(DistDriftError, RuntimeError):
    pass


class ContractionNotGuaranteed(DistDriftError, ValueError):
    def __init__(self, message, k=None, threshold=None):
        super().__init__(message)
        self.k = k
        self.threshold = threshold


class RangeExceeded(DistDriftError, RuntimeError):
    def __init__(self, message, paths=()):
        super().__init__(message)
        self.paths = list(paths)


class InconsistentEnsemble(DistDriftError, ValueError):
    pass


class OutOfHorizon(DistDriftError, ValueError):
    pass


class Unsupported(DistDriftError, ValueError):
    pass


class ConfigError(DistDriftError, ValueError):
    pass
