"""Exception hierarchy. Every error carries the CLI exit code it maps to."""


class BhamError(Exception):
    exit_code = 1


class UsageError(BhamError):
    """Bad input, bad configuration or bad data. Exit code 2."""
    exit_code = 2


class NumericalError(BhamError):
    """A numerical routine could not produce a valid result. Exit code 1."""
    exit_code = 1


class ConfigError(UsageError):
    pass


class BadK(UsageError):
    pass


class MissingVariable(UsageError):
    pass


class ParseError(UsageError):
    def __init__(self, message: str, row: int = None, column: str = None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyAfterFiltering(UsageError):
    pass


class DimensionMismatch(UsageError):
    pass


class RowCountMismatch(UsageError):
    pass


class EmptyFrame(UsageError):
    pass


class NonFiniteInput(UsageError):
    pass


class TooFewDistinctValues(UsageError):
    pass


class AsymmetricPenalty(NumericalError):
    pass


class NegativeEigenvalueBeyondTolerance(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class ZeroVariance(NumericalError):
    pass


class SingleClass(NumericalError):
    pass
