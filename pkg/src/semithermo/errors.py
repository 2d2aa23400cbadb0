"""Exception hierarchy shared by every module."""


class SemithermoError(Exception):
    """Base class for all library errors."""


class PreconditionError(SemithermoError, ValueError):
    """An argument violates an operation's documented precondition."""


class NonConvergence(SemithermoError):
    pass


class DegenerateEquation(SemithermoError):
    pass


class DepthExceeded(SemithermoError):
    pass


class BasePointTooClose(SemithermoError):
    pass


class CriticalBranch(SemithermoError):
    pass


class NoSignChange(SemithermoError):
    pass


class GridTooCoarse(SemithermoError):
    pass


class ScaleRangeSaturated(SemithermoError):
    pass


class NoRepellingSeed(SemithermoError):
    pass


class NotPolynomial(SemithermoError):
    pass


class SeriesNotSummable(SemithermoError):
    pass


class ParseError(SemithermoError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ValidationError(SemithermoError, ValueError):
    pass
