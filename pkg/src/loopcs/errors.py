"""Exception hierarchy shared by all modules."""


class LoopCSError(Exception):
    """Base class for every error raised by the package."""


class OrderExceededError(LoopCSError):
    pass


class DomainError(LoopCSError):
    """A point lies outside the chart's domain box."""


class ChartMismatchError(LoopCSError):
    pass


class SingularMetricError(LoopCSError):
    pass


class NotPositiveDefiniteError(SingularMetricError):
    pass


class NotAnIsometryError(LoopCSError):
    pass


class DimensionMismatchError(LoopCSError):
    pass


class ScheduleError(LoopCSError):
    pass


class JacobianSingularError(LoopCSError):
    pass


class GridTooCoarseError(LoopCSError):
    pass


class StepTooSmallError(LoopCSError):
    pass


class DenominatorBelowThresholdError(LoopCSError):
    pass


class DeckNotIsometryError(LoopCSError):
    pass


class CacheError(LoopCSError):
    pass


class CorruptHeaderError(CacheError):
    pass


class HashMismatchError(CacheError):
    pass


class TruncatedPayloadError(CacheError):
    pass


class ConfigError(LoopCSError):
    pass
