"""Exception hierarchy.

``InputError`` subclasses signal bad inputs or violated preconditions (CLI exit 2).
``FitError`` subclasses signal numerical trouble during estimation (CLI exit 3);
they may carry the partial result in ``.result``.
"""


class SmartRelError(Exception):
    pass


class InputError(SmartRelError, ValueError):
    pass


class MalformedRow(InputError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


class InvariantViolation(InputError):
    pass


class EmptyDataset(InputError):
    pass


class NonPositiveTime(InputError):
    pass


class NonPositiveSigma(InputError):
    pass


class AllCensored(InputError):
    pass


class ProbabilityOutOfRange(InputError):
    pass


class OrderOutOfRange(InputError):
    pass


class NonFiniteObjective(InputError):
    pass


class ConstraintViolation(InputError):
    pass


class OutOfDomain(InputError):
    pass


class EventOutsideExposure(InputError):
    pass


class TooFewEvents(InputError):
    pass


class TooFewUnits(InputError):
    pass


class NonPDSigma(InputError):
    pass


class EmptyPath(InputError):
    pass


class GridNotPositive(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class EmptyClass(InputError):
    pass


class TooFewScores(InputError):
    pass


class ZeroWeight(InputError):
    pass


class UnsupportedDimension(InputError):
    pass


class RankDeficient(InputError):
    def __init__(self, msg, aliased=()):
        super().__init__(msg)
        self.aliased = list(aliased)


class TooFewOutcomes(InputError):
    pass


class NonPositiveFactor(InputError):
    pass


class UnboundedIntensity(InputError):
    pass


class FitError(SmartRelError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class NonConvergence(FitError):
    pass


class DegenerateData(NonConvergence):
    pass


class CompleteSeparation(FitError):
    pass


class SingularCovariance(FitError):
    pass


class RefitFailureRateExceeded(FitError):
    pass
