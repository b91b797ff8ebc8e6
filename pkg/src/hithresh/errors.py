"""Exception hierarchy shared by every module in the package."""


class HiThreshError(Exception):
    """Base class for all package errors."""


class InvalidArgument(HiThreshError, ValueError):
    pass


class DomainError(HiThreshError, ValueError):
    pass


class DataError(HiThreshError, ValueError):
    """A value stream contained something unusable (e.g. NaN at a given index)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericFailure(HiThreshError, ArithmeticError):
    """An iterative numeric routine did not converge or produced non-finite values."""

    def __init__(self, message, last_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate


class UnsupportedMode(HiThreshError, ValueError):
    pass


class ProgressFailure(HiThreshError, RuntimeError):
    pass


class CoverageFailure(HiThreshError, RuntimeError):
    def __init__(self, message, found=0, wanted=0):
        super().__init__(message)
        self.found = found
        self.wanted = wanted


class InversionFailure(HiThreshError, ArithmeticError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SearchFailure(HiThreshError, RuntimeError):
    pass


class InsufficientData(HiThreshError, RuntimeError):
    pass


class StructureViolation(HiThreshError, RuntimeError):
    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class VarianceFailure(HiThreshError, RuntimeError):
    pass


class PreconditionFailure(HiThreshError, ValueError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class ConfigError(HiThreshError, ValueError):
    pass
