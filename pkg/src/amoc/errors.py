"""Exception and warning types raised by the changepoint tests."""


class AmocError(Exception):
    """Base class for all errors raised by this package."""


class IndexOutOfRange(AmocError, IndexError):
    pass


class DegenerateVariance(AmocError, ArithmeticError):
    """A studentizing variance estimate is exactly zero."""


class DegenerateSegment(AmocError, ArithmeticError):
    """Every candidate changepoint had a zero within-segment variance."""


class DegenerateSegmentWarning(UserWarning):
    """Some candidate changepoints were skipped because a fit was exact."""


class EmptyCropRange(AmocError, ValueError):
    pass


class SingularDesign(AmocError, ArithmeticError):
    pass


class NumericalSingularity(AmocError, ArithmeticError):
    pass


class ValidationFailure(AmocError, AssertionError):
    pass


class UnknownFamily(AmocError, KeyError):
    pass


class DomainError(AmocError, ValueError):
    pass


class ParseError(AmocError, ValueError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class NonMonotoneTime(AmocError, ValueError):
    pass


class MissingColumn(AmocError, KeyError):
    pass
