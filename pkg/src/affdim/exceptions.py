"""Exception types raised across the package."""


class AffdimError(Exception):
    """Base class for all package errors."""


class SingularMatrix(AffdimError, ValueError):
    pass


class EqualSingularValues(AffdimError, ValueError):
    """Raised when the major direction of a matrix is undefined."""


class IndexOutOfRange(AffdimError, IndexError):
    pass


class BudgetExceeded(AffdimError, RuntimeError):
    """An enumeration would exceed its configured word-count cap."""


class DegenerateSystem(AffdimError, ValueError):
    pass


class NotTriangular(AffdimError, ValueError):
    pass


class EmptyMeasure(AffdimError, ValueError):
    pass


class WindowTooWide(AffdimError, ValueError):
    """The requested scale window is too fine for the sample size."""


class BiasRuleViolated(AffdimError, ValueError):
    pass


class InvalidProbabilityVector(AffdimError, ValueError):
    pass


class InvalidExponents(AffdimError, ValueError):
    pass


class DegenerateCloud(AffdimError, ValueError):
    pass


class EmptyFiber(AffdimError, ValueError):
    pass


class InvalidEccentricity(AffdimError, ValueError):
    pass


class PreconditionViolated(AffdimError, ValueError):
    pass


class ParseError(AffdimError, ValueError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(AffdimError, ValueError):
    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
