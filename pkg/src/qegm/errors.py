"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 validation, 3 numeric,
4 I/O.
"""


class QegmError(Exception):
    exit_code = 2


class ValidationError(QegmError, ValueError):
    pass


class ConfigurationError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class DegenerateDataError(ValidationError):
    pass


class StratificationError(ValidationError):
    pass


class UndefinedMetricError(ValidationError):
    pass


class ComparisonInvalidError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnseenCategoryError(ValidationError):
    pass


class NumericError(QegmError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class EntropyExhaustedError(QegmError):
    exit_code = 4


class StateError(QegmError, RuntimeError):
    pass


class OutputExistsError(QegmError):
    exit_code = 4
